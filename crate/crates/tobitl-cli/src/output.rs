//! Report assembly and file emission: JSON for structured reports, CSV for
//! tabular and plot data, plus a `run_config.json` echo for every run.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use tobitl::bootstrap::{BootstrapConfig, BootstrapReport};
use tobitl::cqr::{CqrOptions, QuantileGrid};
use tobitl::error::Error;
use tobitl::inference::{
    influence_h, jacobian_hat, l_confidence_interval, omega_hat, residual_scale_at_median,
    HacKernel, ScoreConfig,
};
use tobitl::lweights::{IntegrationScheme, WeightMeasure, WeightSpec};
use tobitl::model::{Dataset, Schema};
use tobitl::pipeline::fit_two_stage;
use tobitl::simulate::{McMetrics, SimConfig};

type Result<T> = std::result::Result<T, Error>;

fn versions() -> serde_json::Value {
    json!({ "tobitl": env!("CARGO_PKG_VERSION") })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParameter { name: "json".into(), reason: e.to_string() })?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Fit pipeline: two-stage fit, per-weight integration, HAC inference, and
/// the three fit artifacts (report.json, process.csv, estimates.csv).
#[allow(clippy::too_many_arguments)]
pub fn run_fit(
    out: &Path,
    d: &Dataset,
    schema: &Schema,
    weights: &[WeightSpec],
    grid: &QuantileGrid,
    cqr: &CqrOptions,
    bandwidth: Option<f64>,
    lag_trunc: Option<usize>,
    kernel: HacKernel,
    level: f64,
    seed: u64,
) -> Result<()> {
    let t0 = Instant::now();
    let built: Vec<WeightMeasure> =
        weights.iter().map(|w| w.build()).collect::<Result<Vec<_>>>()?;
    let fit = fit_two_stage(d, &built, grid, cqr)?;
    let scheme = IntegrationScheme::Midpoint;

    let sigma_eta = residual_scale_at_median(&fit.x_hat, d.y(), &fit.process);
    let sc = ScoreConfig::new(
        bandwidth.unwrap_or_else(|| {
            tobitl::inference::default_bandwidth(sigma_eta, d.n())
        }),
        lag_trunc.unwrap_or_else(|| tobitl::inference::default_lag_truncation(d.n())),
        kernel,
    )?;
    let jac = jacobian_hat(&fit.x_hat, &fit.z, d.y(), &fit.process, &sc)?;

    let names = d.names().augmented();
    let mut weight_reports = Vec::new();
    let mut estimate_rows: Vec<EstimateRow> = Vec::new();
    for (spec, mu) in weights.iter().zip(built.iter()) {
        let est = fit.integrate(mu, &scheme)?;
        let h = influence_h(&fit.x_hat, &fit.z, d.y(), &fit.first_stage, &fit.process, &jac, mu)?;
        let om = omega_hat(&h, &sc, fit.process.grid().fingerprint())?;
        let ci = l_confidence_interval(&est, &om, d.n(), level)?;
        for (k, iv) in ci.intervals.iter().enumerate() {
            estimate_rows.push(EstimateRow {
                weight: spec.label(),
                coordinate: k,
                name: names[k].clone(),
                estimate: iv.estimate,
                se: iv.se,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        let omega_rows: Vec<Vec<f64>> = (0..om.matrix.nrows())
            .map(|i| (0..om.matrix.ncols()).map(|j| om.matrix[(i, j)]).collect())
            .collect();
        weight_reports.push(json!({
            "weight": spec.label(),
            "estimate": est.value,
            "renormalization": est.renormalization,
            "se": ci.intervals.iter().map(|c| c.se).collect::<Vec<_>>(),
            "ci_lo": ci.intervals.iter().map(|c| c.lo).collect::<Vec<_>>(),
            "ci_hi": ci.intervals.iter().map(|c| c.hi).collect::<Vec<_>>(),
            "degenerate": ci.intervals.iter().map(|c| c.degenerate).collect::<Vec<_>>(),
            "omega": omega_rows,
            "omega_psd": om.is_numerically_psd(),
        }));
    }

    let config_echo = json!({
        "command": "fit",
        "schema": schema,
        "weights": weights.iter().map(|w| w.label()).collect::<Vec<_>>(),
        "grid": { "tau0": grid.tau0(), "m": grid.len() },
        "seed": seed,
        "starts": cqr.starts,
        "bandwidth": sc.bandwidth,
        "lag_trunc": sc.lag_trunc,
        "kernel": "bartlett",
        "level": level,
        "integration": "midpoint",
        "versions": versions(),
    });
    write_json(&out.join("run_config.json"), &config_echo)?;

    let report = json!({
        "config": config_echo,
        "n": d.n(),
        "p": d.p(),
        "censored": d.censored_count(),
        "censoring_proportion": d.censoring_proportion(),
        "first_stage": {
            "delta_hat": fit.first_stage.delta_hat.as_slice(),
            "gram_condition": fit.first_stage.gram_condition,
        },
        "coefficient_names": names,
        "weights": weight_reports,
        "process": {
            "m": fit.process.len(),
            "converged": fit.process.fits().iter().filter(|f| f.converged).count(),
            "degenerate": fit.process.fits().iter().filter(|f| f.degenerate).count(),
        },
        "timing_ms": t0.elapsed().as_millis() as u64,
    });
    write_json(&out.join("report.json"), &report)?;

    // process.csv: one row per grid point
    let mut wtr = csv::Writer::from_path(out.join("process.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    let mut header = vec!["tau".to_string()];
    header.extend(names.iter().map(|n| format!("coef_{n}")));
    header.extend(
        ["objective", "active_count", "converged", "degenerate", "iterations"]
            .iter()
            .map(|s| s.to_string()),
    );
    wtr.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    for (j, &tau) in fit.process.grid().points().iter().enumerate() {
        let f = fit.process.fit(j);
        let mut rec = vec![format!("{tau}")];
        rec.extend(f.beta.as_slice().iter().map(|v| format!("{v}")));
        rec.push(format!("{}", f.objective));
        rec.push(format!("{}", f.active_count));
        rec.push(format!("{}", f.converged));
        rec.push(format!("{}", f.degenerate));
        rec.push(format!("{}", f.iterations));
        wtr.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    wtr.flush()?;

    let mut wtr = csv::Writer::from_path(out.join("estimates.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    for row in &estimate_rows {
        wtr.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
    }
    wtr.flush()?;
    println!(
        "fit: n = {}, censored = {} ({:.4}); wrote report.json, process.csv, estimates.csv to {}",
        d.n(),
        d.censored_count(),
        d.censoring_proportion(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EstimateRow {
    weight: String,
    coordinate: usize,
    name: String,
    estimate: f64,
    se: f64,
    lo: f64,
    hi: f64,
}

/// Write metrics.csv and emse_curves.csv for a list of per-n runs.
pub fn write_simulation(out: &Path, runs: &[(SimConfig, McMetrics)]) -> Result<()> {
    let first = &runs[0].0;
    let config_echo = json!({
        "command": "simulate",
        "n_list": runs.iter().map(|(c, _)| c.n).collect::<Vec<_>>(),
        "r": first.r,
        "seed": first.seed,
        "beta_true": first.beta_true,
        "rho_star": first.rho_star,
        "sigma": first.sigma,
        "delta_tilde": first.delta_tilde,
        "estimators": first.estimators.iter().map(|w| w.label()).collect::<Vec<_>>(),
        "grid": { "tau0": first.grid.tau0(), "m": first.grid.len() },
        "mc_draws": first.mc_draws,
        "fixed_z": first.fixed_z,
        "starts": first.starts,
        "threads": first.threads,
        "versions": versions(),
    });
    write_json(&out.join("run_config.json"), &config_echo)?;

    let mut wtr = csv::Writer::from_path(out.join("metrics.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    for (_, m) in runs {
        for row in m.rows() {
            wtr.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    wtr.flush()?;

    // plot data: n vs EMSE per estimator/coordinate
    let mut wtr = csv::Writer::from_path(out.join("emse_curves.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    wtr.write_record(["estimator", "coordinate", "n", "emse"])
        .map_err(|e| Error::Csv(e.to_string()))?;
    for (cfg, m) in runs {
        for em in &m.per_estimator {
            for (k, &v) in em.emse.iter().enumerate() {
                wtr.write_record([
                    em.estimator.label(),
                    k.to_string(),
                    cfg.n.to_string(),
                    format!("{v}"),
                ])
                .map_err(|e| Error::Csv(e.to_string()))?;
            }
        }
    }
    wtr.flush()?;

    let mut summary = json!({ "runs": [] });
    let arr = summary["runs"].as_array_mut().unwrap();
    for (cfg, m) in runs {
        arr.push(json!({
            "n": cfg.n,
            "failures": m.failures,
            "cp_mean": m.cp_mean,
            "cp_min": m.cp_min,
            "cp_max": m.cp_max,
            "runtime_secs": m.runtime_secs,
        }));
        println!(
            "simulate n={}: failures {}, C.P. mean {:.3} [{:.3}, {:.3}], {:.1}s",
            cfg.n, m.failures, m.cp_mean, m.cp_min, m.cp_max, m.runtime_secs
        );
    }
    write_json(&out.join("summary.json"), &summary)?;
    println!("wrote metrics.csv, emse_curves.csv, summary.json to {}", out.display());
    Ok(())
}

/// Write brmse.json and replicates.csv.
pub fn write_bootstrap(
    out: &Path,
    d: &Dataset,
    schema: &Schema,
    cfg: &BootstrapConfig,
    report: &BootstrapReport,
) -> Result<()> {
    let config_echo = json!({
        "command": "bootstrap",
        "schema": schema,
        "weight": cfg.weight.label(),
        "b": cfg.b,
        "scheme": cfg.scheme,
        "seed": cfg.seed,
        "grid": { "tau0": cfg.grid.tau0(), "m": cfg.grid.len() },
        "starts": cfg.starts,
        "versions": versions(),
    });
    write_json(&out.join("run_config.json"), &config_echo)?;

    let names = d.names().augmented();
    let body = json!({
        "config": config_echo,
        "n": d.n(),
        "censoring_proportion": d.censoring_proportion(),
        "point": {
            "weight": cfg.weight.label(),
            "estimate": report.point.value,
            "names": names,
        },
        "b": report.b,
        "failures": report.failures,
        "brmse": report.brmse,
    });
    write_json(&out.join("brmse.json"), &body)?;

    let mut wtr = csv::Writer::from_path(out.join("replicates.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    let mut header = vec!["replicate".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    if let Some(reps) = &report.replicate_estimates {
        for (k, est) in reps.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(est.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    wtr.flush()?;
    println!(
        "bootstrap: b = {}, failures = {}; wrote brmse.json, replicates.csv to {}",
        report.b,
        report.failures,
        out.display()
    );
    Ok(())
}
