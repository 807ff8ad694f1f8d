//! Bootstrap root-mean-squared-error assessment of the L-estimate on
//! observed data.
//!
//! Each replicate resamples rows, re-runs the FULL two-stage pipeline — the
//! first stage is re-estimated on the resample, residuals are never reused —
//! and integrates to 𝓛ₙ,ₖ. Dispersion is measured around the original-data
//! estimate:
//!
//! ```text
//! BRMSE_i = sqrt( (1/b) Σ_k (𝓛ₙ,ᵢ,ₖ - 𝓛ₙ,ᵢ)² )
//! ```
//!
//! Pair resampling is the default; a circular moving-block scheme is offered
//! for weakly dependent data (iid resampling is inconsistent under
//! dependence), with block length ⌈n^{1/3}⌉ unless overridden.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqr::{CqrOptions, QuantileGrid};
use crate::error::{Error, Result};
use crate::lweights::{IntegrationScheme, LEstimate, WeightMeasure, WeightSpec};
use crate::model::Dataset;
use crate::pipeline::fit_two_stage;

/// Row resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ResampleScheme {
    /// n independent draws with replacement.
    IidPairs,
    /// Wrap-around blocks of fixed length concatenated to length n.
    MovingBlock { block_len: usize },
    /// The identity permutation (testing hook; BRMSE is exactly 0).
    Identity,
}

impl ResampleScheme {
    pub fn parse(s: &str, n: usize) -> Result<ResampleScheme> {
        match s {
            "iid_pairs" => Ok(ResampleScheme::IidPairs),
            "identity" => Ok(ResampleScheme::Identity),
            "moving_block" => Ok(ResampleScheme::MovingBlock { block_len: default_block_len(n) }),
            other => {
                if let Some(rest) = other.strip_prefix("moving_block:") {
                    let block_len = rest.parse::<usize>().map_err(|_| {
                        Error::invalid("scheme", "moving_block:<len> needs an integer length")
                    })?;
                    Ok(ResampleScheme::MovingBlock { block_len })
                } else {
                    Err(Error::invalid(
                        "scheme",
                        format!("unknown scheme `{other}` (iid_pairs|moving_block[:len]|identity)"),
                    ))
                }
            }
        }
    }
}

/// Default moving-block length ⌈n^{1/3}⌉.
pub fn default_block_len(n: usize) -> usize {
    (n as f64).powf(1.0 / 3.0).ceil() as usize
}

/// Draw a resample index vector of length n.
pub fn resample_indices(
    n: usize,
    scheme: &ResampleScheme,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    match scheme {
        ResampleScheme::Identity => Ok((0..n).collect()),
        ResampleScheme::IidPairs => Ok((0..n).map(|_| rng.gen_range(0..n)).collect()),
        ResampleScheme::MovingBlock { block_len } => {
            let l = *block_len;
            if l == 0 || l > n {
                return Err(Error::invalid("block_len", format!("must lie in [1, {n}]")));
            }
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let start = rng.gen_range(0..n);
                for k in 0..l {
                    if out.len() == n {
                        break;
                    }
                    out.push((start + k) % n);
                }
            }
            Ok(out)
        }
    }
}

/// Bootstrap configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub scheme: ResampleScheme,
    pub seed: u64,
    pub weight: WeightSpec,
    pub grid: QuantileGrid,
    pub starts: usize,
    /// Keep the b × (p+2) replicate estimates in the report.
    pub keep_replicates: bool,
    pub threads: usize,
}

impl BootstrapConfig {
    pub fn new(b: usize, scheme: ResampleScheme, seed: u64, weight: WeightSpec) -> Self {
        BootstrapConfig {
            b,
            scheme,
            seed,
            weight,
            grid: QuantileGrid::default_grid(),
            starts: CqrOptions::default().starts,
            keep_replicates: true,
            threads: 0,
        }
    }
}

/// Bootstrap output: point estimate, per-coordinate BRMSE, and bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub point: LEstimate,
    pub b: usize,
    pub brmse: Vec<f64>,
    pub replicate_estimates: Option<Vec<Vec<f64>>>,
    pub failures: usize,
}

/// Run the bootstrap: fit the original data, then per replicate resample,
/// re-run the whole pipeline, and integrate. Replicate failures are counted
/// and excluded; the run aborts when more than 20% fail.
pub fn bootstrap_brmse(d: &Dataset, cfg: &BootstrapConfig) -> Result<BootstrapReport> {
    if cfg.b < 1 {
        return Err(Error::invalid("b", "at least one bootstrap replicate required"));
    }
    if let ResampleScheme::MovingBlock { block_len } = cfg.scheme {
        if block_len == 0 || block_len > d.n() {
            return Err(Error::invalid("block_len", format!("must lie in [1, {}]", d.n())));
        }
    }
    let weight: WeightMeasure = cfg.weight.build()?;
    let weights = [weight];
    let scheme = IntegrationScheme::Midpoint;

    let point_fit = fit_two_stage(
        d,
        &weights,
        &cfg.grid,
        &CqrOptions { starts: cfg.starts, seed: cfg.seed, ..Default::default() },
    )?;
    let point = point_fit.integrate(&weights[0], &scheme)?;
    let point_vec = point.vector();
    let dim = point_vec.len();

    let run_replicate = |k: usize| -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (k as u64 + 1));
        let idx = resample_indices(d.n(), &cfg.scheme, &mut rng).ok()?;
        let resample = d.select_rows(&idx);
        // the optimizer seed is deliberately the same as for the point fit:
        // multi-start perturbations are an optimization device, and reusing
        // the stream makes an identity resample reproduce 𝓛ₙ bit-exactly
        let cqr = CqrOptions { starts: cfg.starts, seed: cfg.seed, ..Default::default() };
        let fit = match fit_two_stage(&resample, &weights, &cfg.grid, &cqr) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("bootstrap replicate {k} failed: {e}");
                return None;
            }
        };
        fit.integrate(&weights[0], &scheme).ok().map(|e| e.value)
    };

    let results: Vec<Option<Vec<f64>>> = if cfg.threads == 1 {
        (0..cfg.b).map(run_replicate).collect()
    } else if cfg.threads == 0 {
        (0..cfg.b).into_par_iter().map(run_replicate).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        pool.install(|| (0..cfg.b).into_par_iter().map(run_replicate).collect())
    };

    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures * 5 > cfg.b {
        return Err(Error::TooManyFailures { failed: failures, total: cfg.b, limit_pct: 20 });
    }
    let kept: Vec<&Vec<f64>> = results.iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllReplicatesFailed { failed: failures, total: cfg.b });
    }

    let mut brmse = vec![0.0; dim];
    for est in &kept {
        for k in 0..dim {
            let diff = est[k] - point_vec[k];
            brmse[k] += diff * diff;
        }
    }
    for v in &mut brmse {
        *v = (*v / kept.len() as f64).sqrt();
    }

    Ok(BootstrapReport {
        point,
        b: cfg.b,
        brmse,
        replicate_estimates: cfg
            .keep_replicates
            .then(|| kept.iter().map(|v| (*v).clone()).collect()),
        failures,
    })
}
