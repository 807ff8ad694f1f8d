//! First-stage least squares: regress the endogenous regressor on the
//! instrument design `Z = [z1 | x̃]` and keep the residuals `e_i = w_i -
//! z_i'δ̂` as the control function for the second stage.
//!
//! The solve goes through an SVD rather than the normal equations; the Gram
//! condition number is reported so callers can see when the design is close
//! to the identification boundary.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{fingerprint_f64, InstrumentDesign};

/// Relative rank tolerance: a design whose smallest singular value falls
/// below `RANK_TOL`·(largest) is treated as singular.
pub const RANK_TOL: f64 = 1e-12;

/// Result of the first-stage regression.
#[derive(Debug, Clone)]
pub struct FirstStageFit {
    /// Coefficients on `[z1 | x̃]`, instrument first.
    pub delta_hat: DVector<f64>,
    /// Residuals `e_i = w_i - z_i'δ̂`.
    pub residuals: Vec<f64>,
    /// Condition number of `Z'Z`.
    pub gram_condition: f64,
    /// Hash binding the residual sequence to this fit.
    pub fingerprint: u64,
}

/// Least-squares fit of `w` on the instrument design.
///
/// Errors with [`Error::SingularDesign`] when `rank(Z) < p+1` at the
/// `1e-12` relative tolerance, which signals that the excluded instrument
/// carries no identifying variation.
pub fn ols_fit(z: &InstrumentDesign, w: &[f64]) -> Result<FirstStageFit> {
    let n = z.nrows();
    let k = z.ncols();
    if w.len() != n {
        return Err(Error::LengthMismatch { what: "w".into(), got: w.len(), expected: n });
    }
    if n <= k {
        return Err(Error::TooFewRows { n, min: k + 1 });
    }

    let svd = z.matrix().clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) || smax == 0.0 {
        return Err(Error::SingularDesign { smallest: smin, tol: RANK_TOL * smax });
    }

    let rhs = DVector::from_column_slice(w);
    let delta_hat = svd
        .solve(&rhs, RANK_TOL * smax)
        .map_err(|_| Error::SingularDesign { smallest: smin, tol: RANK_TOL * smax })?;

    let e = residuals(&delta_hat, z, w);
    let gram_condition = (smax / smin).powi(2);
    let fingerprint = fingerprint_f64(&e);
    Ok(FirstStageFit { delta_hat, residuals: e, gram_condition, fingerprint })
}

/// Residuals `e_i = w_i - z_i'δ` for an arbitrary coefficient vector.
pub fn residuals(delta: &DVector<f64>, z: &InstrumentDesign, w: &[f64]) -> Vec<f64> {
    let fitted = z.matrix() * delta;
    w.iter().zip(fitted.iter()).map(|(wi, fi)| wi - fi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instrument_design, ColumnNames, Dataset, InstrumentDesign};
    use approx::assert_abs_diff_eq;

    fn dataset(z1: Vec<f64>, w: Vec<f64>) -> Dataset {
        let n = z1.len();
        let names = ColumnNames {
            response: "y".into(),
            exogenous: vec!["const".into()],
            endogenous: "w".into(),
            instrument: "z".into(),
        };
        Dataset::new(vec![1.0; n], vec![1.0; n], 1, w, z1, names).unwrap()
    }

    #[test]
    fn mean_only_fit() {
        // ones-column design, w=(1,2,3): delta_hat = mean = 2, e = (-1,0,1)
        let z = InstrumentDesign::from_matrix(nalgebra::DMatrix::from_element(3, 1, 1.0));
        let fit = ols_fit(&z, &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(fit.delta_hat[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_fit_instrument_first() {
        // z1=(0,1,2), w = 1 + 2 z1 exactly -> delta_hat = (2, 1), e == 0
        let d = dataset(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 5.0, 7.0]);
        let z = build_instrument_design(&d);
        let fit = ols_fit(&z, d.w()).unwrap();
        assert_abs_diff_eq!(fit.delta_hat[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.delta_hat[1], 1.0, epsilon = 1e-10);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn matches_closed_form_normal_equations() {
        // z1=(0,1,2), intercept, w=(0,2,3). Closed form (Z'Z)^{-1} Z'w:
        // Z'Z = [[5,3],[3,3]], Z'w = [8,5] -> delta = (1.5, 1/6).
        let z = InstrumentDesign::from_matrix(nalgebra::DMatrix::from_row_slice(
            3,
            2,
            &[0.0, 1.0, 1.0, 1.0, 2.0, 1.0],
        ));
        let w = [0.0, 2.0, 3.0];
        let fit = ols_fit(&z, &w).unwrap();
        assert_abs_diff_eq!(fit.delta_hat[0], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.delta_hat[1], 1.0 / 6.0, epsilon = 1e-10);

        // normal equations: Z'(w - Z delta) = 0
        let resid = DVector::from_column_slice(&fit.residuals);
        let zt_e = z.matrix().transpose() * resid;
        let scale = 1.0 + w.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in zt_e.iter() {
            assert!(v.abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn singular_design_is_detected() {
        // instrument identical to the intercept -> rank 1
        let d = dataset(vec![1.0, 1.0, 1.0, 1.0], vec![0.0, 2.0, 3.0, 1.0]);
        let z = build_instrument_design(&d);
        match ols_fit(&z, d.w()) {
            Err(Error::SingularDesign { .. }) => {}
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn shift_equivariance() {
        let z1 = vec![0.3, -1.2, 0.7, 2.0, -0.4, 1.1];
        let w: Vec<f64> = z1.iter().map(|z| 0.5 + 0.8 * z + 0.1 * z * z).collect();
        let d = dataset(z1.clone(), w.clone());
        let z = build_instrument_design(&d);
        let fit = ols_fit(&z, d.w()).unwrap();

        let k = 7.5;
        let w_shift: Vec<f64> = w.iter().map(|v| v + k).collect();
        let fit2 = ols_fit(&z, &w_shift).unwrap();
        // intercept (column 1) moves by k, instrument coefficient unchanged
        assert_abs_diff_eq!(fit2.delta_hat[0], fit.delta_hat[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fit2.delta_hat[1], fit.delta_hat[1] + k, epsilon = 1e-10);
        for (a, b) in fit.residuals.iter().zip(fit2.residuals.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn residuals_at_zero_delta_equal_w() {
        let d = dataset(vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0, 7.0]);
        let z = build_instrument_design(&d);
        let e = residuals(&DVector::zeros(2), &z, d.w());
        assert_eq!(e, d.w().to_vec());
    }
}
