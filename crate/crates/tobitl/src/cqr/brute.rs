//! Exhaustive grid minimization of the censored objective over a box.
//! Test oracle for [`super::cqr_fit`]; not meant for production sizes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::cqr_objective;

/// Total grid-point budget.
pub const BRUTE_BUDGET: u128 = 10_000_000;

/// Scan `β` over the axis-aligned box `lo[j]..=hi[j]` with spacing `step` and
/// return the best grid point and its objective. Ties go to the
/// lexicographically smallest point (the box is scanned in lexicographic
/// order with the first coordinate slowest).
pub fn brute_force_cqr(
    x_hat: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    lo: &[f64],
    hi: &[f64],
    step: f64,
) -> Result<(DVector<f64>, f64)> {
    let d = x_hat.ncols();
    if lo.len() != d || hi.len() != d {
        return Err(Error::LengthMismatch { what: "box".into(), got: lo.len(), expected: d });
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let counts: Vec<usize> = (0..d)
        .map(|j| {
            if hi[j] < lo[j] {
                0
            } else {
                ((hi[j] - lo[j]) / step).floor() as usize + 1
            }
        })
        .collect();
    let mut total: u128 = 1;
    for &c in &counts {
        if c == 0 {
            return Err(Error::invalid("box", "hi must be >= lo in every coordinate"));
        }
        total = total.saturating_mul(c as u128);
    }
    if total > BRUTE_BUDGET {
        return Err(Error::BudgetExceeded { points: total, budget: BRUTE_BUDGET });
    }

    let mut idx = vec![0usize; d];
    let mut beta = vec![0.0f64; d];
    let mut best_beta = vec![0.0f64; d];
    let mut best = f64::INFINITY;
    loop {
        for j in 0..d {
            beta[j] = lo[j] + idx[j] as f64 * step;
        }
        let f = cqr_objective(&beta, x_hat, y, tau);
        if f < best {
            best = f;
            best_beta.copy_from_slice(&beta);
        }
        // odometer increment, last coordinate fastest
        let mut j = d;
        loop {
            if j == 0 {
                return Ok((DVector::from_vec(best_beta), best));
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
}
