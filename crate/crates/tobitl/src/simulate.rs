//! Monte Carlo engine: seeded data generation for the censored
//! control-function design, a replication loop over the full two-stage
//! pipeline, and empirical bias / MSE accounting against the population
//! L-functional.
//!
//! The data generating process is
//!
//! ```text
//! w_i = δ̃ z_i + ν_i,          z_i ~ U(0,1), ν_i ~ N(0,1)
//! y_i = max(0, β₀ + β₁ x_i + β₂ w_i + ρ₁ ν_i + ε_i),  x_i ~ N(0,1)
//! ε_i = ρ* ε_{i-1} + η_i,     η_i ~ N(0,σ²), ε₀ stationary
//! ```
//!
//! with defaults (β₀,β₁,β₂,ρ₁) = (1,2,3,0.5), ρ* = 0.5, σ = 1, δ̃ = 1. The
//! true coefficient path is β₀(τ) = (β₀ + σ∞Φ⁻¹(τ), β₁, β₂, ρ₁) with
//! σ∞² = σ²/(1-ρ*²), and 𝓛₀ integrates it with the same quadrature as the
//! estimator, so the bias accounting carries no integration noise.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::cqr::{CqrOptions, QuantileGrid};
use crate::error::{Error, Result};
use crate::lweights::{population_l0, IntegrationScheme, WeightMeasure, WeightSpec};
use crate::model::{ColumnNames, Dataset};
use crate::pipeline::fit_two_stage;

/// Salt for the fixed-z stream so it never collides with replicate streams.
const FIXED_Z_SALT: u64 = 0xF17E_D21A_5EED_0001;
/// Salt for Monte Carlo integration seeds.
const MC_SALT: u64 = 0x4D43_17E9_0B5C_3D11;

/// Monte Carlo experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Number of replications.
    pub r: usize,
    /// True (β₀, β₁, β₂, ρ₁).
    pub beta_true: [f64; 4],
    /// AR(1) coefficient of the persistent error.
    pub rho_star: f64,
    /// Innovation standard deviation.
    pub sigma: f64,
    /// First-stage slope on the instrument.
    pub delta_tilde: f64,
    pub seed: u64,
    /// Weight measures to integrate (all share one quantile process).
    pub estimators: Vec<WeightSpec>,
    pub grid: QuantileGrid,
    /// When set, both 𝓛ₙ and 𝓛₀ use the U(0,1) Monte Carlo integration
    /// scheme with this many draws instead of the midpoint rule.
    pub mc_draws: Option<usize>,
    /// Draw z once from the master seed and reuse it across replicates.
    pub fixed_z: bool,
    /// Multi-start count passed to the censored fitter.
    pub starts: usize,
    /// Worker threads (0 = library default). Results are identical for any
    /// thread count; replicate streams are derived from seed ⊕ index and
    /// reduction is done in index order.
    pub threads: usize,
}

impl SimConfig {
    /// Defaults matching the simulation design: β = (1,2,3,0.5), ρ* = 0.5,
    /// σ = 1, δ̃ = 1.
    pub fn new(n: usize, r: usize, seed: u64, estimators: Vec<WeightSpec>) -> SimConfig {
        SimConfig {
            n,
            r,
            beta_true: [1.0, 2.0, 3.0, 0.5],
            rho_star: 0.5,
            sigma: 1.0,
            delta_tilde: 1.0,
            seed,
            estimators,
            grid: QuantileGrid::default_grid(),
            mc_draws: None,
            fixed_z: false,
            starts: CqrOptions::default().starts,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_star.abs() >= 1.0 {
            return Err(Error::invalid("rho_star", "|rho_star| must be < 1"));
        }
        if self.n < 10 {
            return Err(Error::invalid("n", "must be at least 10"));
        }
        if self.r < 1 {
            return Err(Error::invalid("r", "at least one replication required"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("estimators", "at least one weight required"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        Ok(())
    }

    /// Long-run standard deviation of the AR(1) error, σ/√(1-ρ*²).
    pub fn sigma_infinity(&self) -> f64 {
        self.sigma / (1.0 - self.rho_star * self.rho_star).sqrt()
    }
}

/// Stationary AR(1) sample: the first element is drawn from
/// N(0, σ²/(1-ρ*²)) and the rest follow the recursion, so no burn-in is
/// needed.
pub fn gen_ar1(n: usize, rho_star: f64, sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if rho_star.abs() >= 1.0 {
        return Err(Error::invalid("rho_star", "|rho_star| must be < 1 for stationarity"));
    }
    let sd_stat = sigma / (1.0 - rho_star * rho_star).sqrt();
    let mut out = Vec::with_capacity(n);
    let g0: f64 = StandardNormal.sample(rng);
    out.push(sd_stat * g0);
    for i in 1..n {
        let g: f64 = StandardNormal.sample(rng);
        out.push(rho_star * out[i - 1] + sigma * g);
    }
    Ok(out)
}

/// Latent quantities a replicate produces besides the observable dataset.
/// Diagnostics only: the estimator never sees ν.
#[derive(Debug, Clone)]
pub struct LatentDiagnostics {
    pub nu: Vec<f64>,
    pub censoring_proportion: f64,
}

/// Generate one replicate of the design. Draw order per stream: z, x, ν,
/// then the AR(1) chain.
pub fn gen_dgp(cfg: &SimConfig, replicate_index: usize) -> Result<(Dataset, LatentDiagnostics)> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ replicate_index as u64);

    let z: Vec<f64> = if cfg.fixed_z {
        let mut zrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ FIXED_Z_SALT);
        (0..n).map(|_| zrng.gen::<f64>()).collect()
    } else {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    };
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nu: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let eps = gen_ar1(n, cfg.rho_star, cfg.sigma, &mut rng)?;

    let [b0, b1, b2, rho1] = cfg.beta_true;
    let w: Vec<f64> = (0..n).map(|i| cfg.delta_tilde * z[i] + nu[i]).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| (b0 + b1 * x[i] + b2 * w[i] + rho1 * nu[i] + eps[i]).max(0.0))
        .collect();

    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        rows.push(1.0);
        rows.push(x[i]);
    }
    let names = ColumnNames {
        response: "y".into(),
        exogenous: vec!["const".into(), "x".into()],
        endogenous: "w".into(),
        instrument: "z".into(),
    };
    let d = Dataset::new(y, rows, 2, w, z, names)?;
    let cp = d.censoring_proportion();
    Ok((d, LatentDiagnostics { nu, censoring_proportion: cp }))
}

/// Fraction of censored observations in a dataset.
pub fn censoring_proportion(d: &Dataset) -> f64 {
    d.censoring_proportion()
}

/// True coefficient path τ ↦ (β₀ + σ∞Φ⁻¹(τ), β₁, β₂, ρ₁).
pub fn true_beta_path(cfg: &SimConfig) -> impl Fn(f64) -> DVector<f64> {
    let [b0, b1, b2, rho1] = cfg.beta_true;
    let sigma_inf = cfg.sigma_infinity();
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
    move |tau: f64| {
        DVector::from_vec(vec![b0 + sigma_inf * normal.inverse_cdf(tau), b1, b2, rho1])
    }
}

/// Per-estimator Monte Carlo summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub estimator: WeightSpec,
    pub l0: Vec<f64>,
    pub ebias: Vec<f64>,
    pub emse: Vec<f64>,
}

/// Aggregated Monte Carlo metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McMetrics {
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub per_estimator: Vec<EstimatorMetrics>,
    pub cp_mean: f64,
    pub cp_min: f64,
    pub cp_max: f64,
    pub failures: usize,
    pub runtime_secs: f64,
}

/// One flattened row per (estimator, coordinate), ready for CSV emission.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub estimator: String,
    pub n: usize,
    pub coordinate: usize,
    pub ebias: f64,
    pub emse: f64,
    pub cp_mean: f64,
}

impl McMetrics {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut out = Vec::new();
        for em in &self.per_estimator {
            for (k, (&eb, &ms)) in em.ebias.iter().zip(em.emse.iter()).enumerate() {
                out.push(MetricRow {
                    estimator: em.estimator.label(),
                    n: self.n,
                    coordinate: k,
                    ebias: eb,
                    emse: ms,
                    cp_mean: self.cp_mean,
                });
            }
        }
        out
    }
}

/// Run the full experiment: per replicate, generate data, run the two-stage
/// pipeline once, and integrate every estimator from the shared quantile
/// process. Estimation failures are counted and excluded; the run aborts if
/// more than 10% of replicates fail.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<McMetrics> {
    cfg.validate()?;
    let start = Instant::now();

    let weights: Vec<WeightMeasure> =
        cfg.estimators.iter().map(|s| s.build()).collect::<Result<_>>()?;

    let scheme_for = |salt: u64| -> IntegrationScheme {
        match cfg.mc_draws {
            Some(draws) => IntegrationScheme::MonteCarlo { draws, seed: cfg.seed ^ salt },
            None => IntegrationScheme::Midpoint,
        }
    };

    let path = true_beta_path(cfg);
    let l0: Vec<DVector<f64>> = weights
        .iter()
        .map(|w| population_l0(&path, &cfg.grid, w, &scheme_for(MC_SALT)))
        .collect::<Result<_>>()?;

    let run_replicate = |k: usize| -> (f64, Option<Vec<DVector<f64>>>) {
        let (d, diag) = match gen_dgp(cfg, k) {
            Ok(v) => v,
            Err(_) => return (f64::NAN, None),
        };
        let cqr = CqrOptions {
            starts: cfg.starts,
            seed: cfg.seed ^ (k as u64).rotate_left(17) ^ 0xA5A5_5A5A_0000_0000,
            ..Default::default()
        };
        let fit = match fit_two_stage(&d, &weights, &cfg.grid, &cqr) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("replicate {k} failed: {e}");
                return (diag.censoring_proportion, None);
            }
        };
        let scheme = scheme_for((k as u64) ^ MC_SALT);
        let mut ests = Vec::with_capacity(weights.len());
        for w in &weights {
            match fit.integrate(w, &scheme) {
                Ok(e) => ests.push(e.vector()),
                Err(e) => {
                    log::debug!("replicate {k} integration failed: {e}");
                    return (diag.censoring_proportion, None);
                }
            }
        }
        (diag.censoring_proportion, Some(ests))
    };

    // Replicates are independent; results are collected in index order so the
    // reduction is bit-identical for any thread count.
    let results: Vec<(f64, Option<Vec<DVector<f64>>>)> = if cfg.threads == 1 {
        (0..cfg.r).map(run_replicate).collect()
    } else if cfg.threads == 0 {
        (0..cfg.r).into_par_iter().map(run_replicate).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        pool.install(|| (0..cfg.r).into_par_iter().map(run_replicate).collect())
    };

    let failures = results.iter().filter(|(_, e)| e.is_none()).count();
    if failures * 10 > cfg.r {
        return Err(Error::TooManyFailures { failed: failures, total: cfg.r, limit_pct: 10 });
    }
    if failures == cfg.r {
        return Err(Error::AllReplicatesFailed { failed: failures, total: cfg.r });
    }

    let kept = (cfg.r - failures) as f64;
    let dim = 4;
    let mut ebias = vec![vec![0.0; dim]; weights.len()];
    let mut emse = vec![vec![0.0; dim]; weights.len()];
    let mut cp_mean = 0.0;
    let mut cp_min = f64::INFINITY;
    let mut cp_max = f64::NEG_INFINITY;
    let mut cp_count = 0.0_f64;
    for (cp, ests) in &results {
        if cp.is_finite() {
            cp_mean += cp;
            cp_min = cp_min.min(*cp);
            cp_max = cp_max.max(*cp);
            cp_count += 1.0;
        }
        if let Some(ests) = ests {
            for (e, est) in ests.iter().enumerate() {
                for k in 0..dim {
                    let err = est[k] - l0[e][k];
                    ebias[e][k] += err;
                    emse[e][k] += err * err;
                }
            }
        }
    }
    cp_mean /= cp_count.max(1.0);
    let per_estimator = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(e, spec)| EstimatorMetrics {
            estimator: *spec,
            l0: l0[e].iter().copied().collect(),
            ebias: ebias[e].iter().map(|v| v / kept).collect(),
            emse: emse[e].iter().map(|v| v / kept).collect(),
        })
        .collect();

    Ok(McMetrics {
        n: cfg.n,
        r: cfg.r,
        seed: cfg.seed,
        per_estimator,
        cp_mean,
        cp_min,
        cp_max,
        failures,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
