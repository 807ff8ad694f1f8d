//! Shared two-stage driver: first-stage least squares, augmented design,
//! quantile process (with dedicated fits at every weight atom), and
//! integration into L-estimates. The Monte Carlo engine, the bootstrap, and
//! the CLI all run through this path so they cannot drift apart.

use crate::cqr::{quantile_process_at, CqrOptions, QuantileGrid, QuantileProcess};
use crate::error::Result;
use crate::first_stage::{ols_fit, FirstStageFit};
use crate::lweights::{integrate_process, IntegrationScheme, LEstimate, WeightMeasure};
use crate::model::{
    build_augmented_design, build_instrument_design, AugmentedDesign, Dataset, InstrumentDesign,
};

/// A complete second-stage fit, ready for integration and inference.
#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub z: InstrumentDesign,
    pub first_stage: FirstStageFit,
    pub x_hat: AugmentedDesign,
    pub process: QuantileProcess,
}

/// τ locations at which weight atoms require dedicated fits.
pub fn atom_locations(weights: &[WeightMeasure]) -> Vec<f64> {
    let mut out: Vec<f64> = weights
        .iter()
        .flat_map(|w| w.atoms().iter().map(|&(t, _)| t))
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    out
}

/// Run the full two-stage pipeline on a dataset.
pub fn fit_two_stage(
    d: &Dataset,
    weights: &[WeightMeasure],
    grid: &QuantileGrid,
    cqr: &CqrOptions,
) -> Result<TwoStageFit> {
    let z = build_instrument_design(d);
    let first_stage = ols_fit(&z, d.w())?;
    let x_hat = build_augmented_design(d, &first_stage.residuals)?;
    let atoms = atom_locations(weights);
    let process = quantile_process_at(x_hat.matrix(), d.y(), grid, &atoms, cqr)?;
    Ok(TwoStageFit { z, first_stage, x_hat, process })
}

impl TwoStageFit {
    pub fn integrate(&self, mu: &WeightMeasure, scheme: &IntegrationScheme) -> Result<LEstimate> {
        integrate_process(&self.process, mu, scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lweights::{trimmed_weight, winsorized_weight};
    use crate::model::ColumnNames;
    use approx::assert_abs_diff_eq;

    fn noiseless_dataset(n: usize) -> Dataset {
        // y = max(0, 1 + 0.5 x + 2 w), w = z exactly (residuals all zero)
        let z1: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let w = z1.clone();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let y: Vec<f64> =
            (0..n).map(|i| (1.0 + 0.5 * x[i] + 2.0 * w[i]).max(0.0)).collect();
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
        Dataset::new(y, rows, 2, w, z1, names).unwrap()
    }

    #[test]
    fn perfect_first_stage_makes_second_stage_degenerate() {
        // w = z exactly: residuals vanish, the e column is identically zero,
        // and the augmented design is rank deficient
        let d = noiseless_dataset(60);
        let grid = QuantileGrid::equispaced(0.1, 9).unwrap();
        let weights = vec![trimmed_weight(0.15).unwrap()];
        let err =
            fit_two_stage(&d, &weights, &grid, &CqrOptions::with_seed(3)).unwrap_err();
        assert!(matches!(err, crate::error::Error::DegenerateDesign { .. }));
    }

    #[test]
    fn pipeline_with_noise_fits_all_weights() {
        // perturb w so residuals are non-degenerate
        let n = 80;
        let z1: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let w: Vec<f64> =
            z1.iter().enumerate().map(|(i, z)| z + 0.4 * (((i * 31) % 17) as f64 / 17.0 - 0.5)).collect();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let y: Vec<f64> =
            (0..n).map(|i| (1.0 + 0.5 * x[i] + 2.0 * w[i]).max(0.0)).collect();
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
        let d = Dataset::new(y, rows, 2, w, z1, names).unwrap();

        let grid = QuantileGrid::equispaced(0.1, 9).unwrap();
        let weights = vec![trimmed_weight(0.15).unwrap(), winsorized_weight(0.15).unwrap()];
        let fit = fit_two_stage(&d, &weights, &grid, &CqrOptions::with_seed(3)).unwrap();
        // atoms at 0.15 and 0.85 got dedicated fits
        assert_eq!(fit.process.extras().len(), 2);
        let scheme = crate::lweights::IntegrationScheme::Midpoint;
        for wm in &weights {
            let est = fit.integrate(wm, &scheme).unwrap();
            assert_eq!(est.value.len(), 4);
            assert!(est.value.iter().all(|v| v.is_finite()));
            // exact data: the fitted structural coefficients are near truth
            assert_abs_diff_eq!(est.value[1], 0.5, epsilon = 0.2);
            assert_abs_diff_eq!(est.value[2], 2.0, epsilon = 0.2);
        }
    }
}
