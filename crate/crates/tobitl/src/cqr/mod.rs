//! Censored quantile regression (Powell-type) over a quantile grid.
//!
//! The second-stage estimand at quantile level τ is
//!
//! ```text
//! β̂(τ) ∈ argmin (1/n) Σ ρ_τ(y_i - max(0, x̂_i'β)),   ρ_τ(u) = (τ - 1{u ≤ 0}) u
//! ```
//!
//! which is non-convex and non-differentiable because of the `max(0, ·)`
//! kink. [`cqr_fit`] attacks it with an iterative linear programming scheme
//! (alternate between the active set `{i : x̂_i'β > 0}` and an exact linear
//! quantile regression on that set) from several deterministic starts; the
//! convex subproblem is solved to a vertex by [`qr_fit`]. See Powell (1984),
//! Buchinsky (1994) for the iteration, Koenker & Bassett (1978) for the
//! linear program.

mod brute;
mod ilpa;
mod simplex;

pub use brute::brute_force_cqr;
pub use ilpa::{cqr_fit, quantile_process, quantile_process_at, CqrFit, CqrOptions, QuantileProcess};
pub use simplex::{qr_fit, qr_fit_with};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile check loss `ρ_τ(u) = (τ - 1{u ≤ 0}) u`. The indicator fires at
/// `u = 0`, where the loss is 0 either way.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    let ind = if u <= 0.0 { 1.0 } else { 0.0 };
    (tau - ind) * u
}

/// Censored objective `(1/n) Σ ρ_τ(y_i - max(0, x̂_i'β))`.
pub fn cqr_objective(beta: &[f64], x_hat: &DMatrix<f64>, y: &[f64], tau: f64) -> f64 {
    let n = x_hat.nrows();
    let d = x_hat.ncols();
    debug_assert_eq!(beta.len(), d);
    debug_assert_eq!(y.len(), n);
    let mut acc = 0.0;
    for i in 0..n {
        let mut xb = 0.0;
        for j in 0..d {
            xb += x_hat[(i, j)] * beta[j];
        }
        acc += check_loss(y[i] - xb.max(0.0), tau);
    }
    acc / n as f64
}

/// Number of observations on the positive side of the kink, `#{i : x̂_i'β > 0}`.
pub fn active_count(beta: &[f64], x_hat: &DMatrix<f64>) -> usize {
    let n = x_hat.nrows();
    let d = x_hat.ncols();
    let mut count = 0;
    for i in 0..n {
        let mut xb = 0.0;
        for j in 0..d {
            xb += x_hat[(i, j)] * beta[j];
        }
        if xb > 0.0 {
            count += 1;
        }
    }
    count
}

/// Evaluation grid `τ_1 < … < τ_m` inside `[τ₀, 1-τ₀]`.
///
/// The equispaced constructor places points at cell midpoints,
/// `τ_j = τ₀ + (j - ½)(1 - 2τ₀)/m`, so that the deterministic integration
/// scheme is a genuine composite midpoint rule. For odd `m` the grid always
/// contains τ = 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    tau0: f64,
    points: Vec<f64>,
}

impl QuantileGrid {
    pub fn equispaced(tau0: f64, m: usize) -> Result<QuantileGrid> {
        if !(tau0 > 0.0 && tau0 < 0.5) {
            return Err(Error::invalid("tau0", "must lie in (0, 0.5)"));
        }
        if m == 0 {
            return Err(Error::invalid("m", "at least one grid point required"));
        }
        let h = (1.0 - 2.0 * tau0) / m as f64;
        let points = (0..m).map(|j| tau0 + (j as f64 + 0.5) * h).collect();
        Ok(QuantileGrid { tau0, points })
    }

    pub fn from_points(tau0: f64, points: Vec<f64>) -> Result<QuantileGrid> {
        if !(tau0 > 0.0 && tau0 < 0.5) {
            return Err(Error::invalid("tau0", "must lie in (0, 0.5)"));
        }
        if points.is_empty() {
            return Err(Error::invalid("points", "at least one grid point required"));
        }
        for w in points.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("points", "must be strictly increasing"));
            }
        }
        if points[0] < tau0 || *points.last().unwrap() > 1.0 - tau0 {
            return Err(Error::invalid("points", "must lie inside [tau0, 1 - tau0]"));
        }
        Ok(QuantileGrid { tau0, points })
    }

    /// Default grid: τ₀ = 0.05 with 99 equispaced points.
    pub fn default_grid() -> QuantileGrid {
        QuantileGrid::equispaced(0.05, 99).expect("valid default grid")
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Lower and upper end of the grid coverage `[τ₀, 1-τ₀]`.
    pub fn range(&self) -> (f64, f64) {
        (self.tau0, 1.0 - self.tau0)
    }

    /// Cell boundaries tiling `[τ₀, 1-τ₀]` with one cell per grid point
    /// (Voronoi cells; for the equispaced grid every point sits at its cell
    /// midpoint).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let m = self.points.len();
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let lo = if j == 0 { self.tau0 } else { 0.5 * (self.points[j - 1] + self.points[j]) };
            let hi = if j == m - 1 {
                1.0 - self.tau0
            } else {
                0.5 * (self.points[j] + self.points[j + 1])
            };
            out.push((lo, hi));
        }
        out
    }

    /// Index of the grid point closest to `tau`.
    pub fn nearest(&self, tau: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (j, &t) in self.points.iter().enumerate() {
            let d = (t - tau).abs();
            if d < dist {
                dist = d;
                best = j;
            }
        }
        best
    }

    pub fn fingerprint(&self) -> u64 {
        crate::model::fingerprint_f64(&self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn check_loss_examples() {
        assert_abs_diff_eq!(check_loss(2.0, 0.5), 1.0);
        assert_abs_diff_eq!(check_loss(-1.0, 0.25), 0.75);
        assert_abs_diff_eq!(check_loss(0.0, 0.9), 0.0);
    }

    #[test]
    fn check_loss_nonnegative_and_convex() {
        let taus = [0.1, 0.25, 0.5, 0.8, 0.95];
        let us = [-3.0, -1.0, -0.2, 0.0, 0.4, 1.7, 5.0];
        for &tau in &taus {
            for &u in &us {
                let v = check_loss(u, tau);
                assert!(v >= 0.0);
                if u != 0.0 {
                    assert!(v > 0.0);
                }
            }
            // midpoint convexity at sampled triples
            for &a in &us {
                for &b in &us {
                    let mid = check_loss(0.5 * (a + b), tau);
                    assert!(mid <= 0.5 * (check_loss(a, tau) + check_loss(b, tau)) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn objective_at_zero_beta() {
        // β = 0: max(0, 0) = 0 so objective is (τ/n) Σ y_i for y ≥ 0
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = [1.0, 2.0, 3.0, 4.0];
        let got = cqr_objective(&[0.0], &x, &y, 0.5);
        assert_abs_diff_eq!(got, 0.5 * 10.0 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_hand_evaluation() {
        // intercept-only, y=(0,2), β=1, τ=0.5 -> (0.5·1 + 0.5·1)/2 = 0.5
        let x = DMatrix::from_element(2, 1, 1.0);
        let got = cqr_objective(&[1.0], &x, &[0.0, 2.0], 0.5);
        assert_abs_diff_eq!(got, 0.5, epsilon = 1e-12);
        // exact fit: y=(1,1), β=1 -> 0 for any τ
        for tau in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(cqr_objective(&[1.0], &x, &[1.0, 1.0], tau), 0.0);
        }
    }

    #[test]
    fn equispaced_grid_is_midpoint_centred() {
        let g = QuantileGrid::equispaced(0.05, 99).unwrap();
        assert_eq!(g.len(), 99);
        assert_abs_diff_eq!(g.points()[49], 0.5, epsilon = 1e-12);
        let cells = g.cells();
        for (j, &(lo, hi)) in cells.iter().enumerate() {
            assert_abs_diff_eq!(0.5 * (lo + hi), g.points()[j], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(cells[0].0, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(cells[98].1, 0.95, epsilon = 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(QuantileGrid::equispaced(0.0, 10).is_err());
        assert!(QuantileGrid::equispaced(0.5, 10).is_err());
        assert!(QuantileGrid::equispaced(0.1, 0).is_err());
        assert!(QuantileGrid::from_points(0.1, vec![0.2, 0.2]).is_err());
        assert!(QuantileGrid::from_points(0.1, vec![0.05]).is_err());
        assert!(QuantileGrid::from_points(0.1, vec![0.2, 0.5, 0.8]).is_ok());
    }
}
