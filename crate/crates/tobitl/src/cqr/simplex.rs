//! Exact solver for the linear quantile regression program
//!
//! ```text
//! min_β Σ_i ρ_τ(y_i - x_i'β)
//! ```
//!
//! by descent through basic (vertex) solutions, i.e. the simplex method in
//! regression form: a vertex interpolates `d = ncols(X)` observations, the
//! `2d` edge directions are the columns of `±(X_B)⁻¹`, and the exact step
//! along a descending edge is a weighted-quantile line search over the
//! residual breakpoints. Every step strictly decreases the objective, so the
//! iteration terminates at an optimal vertex without an anti-cycling rule.
//!
//! Ties are resolved toward the lexicographically smallest solution by a
//! coordinate-wise polish: along each coordinate axis the objective is
//! piecewise linear, its minimizing set is an interval, and we move to the
//! lower endpoint. For an intercept-only design at τ = 0.5 this returns the
//! lower sample median.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::check_loss;

/// Hard cap on simplex pivots, scaled by n at the call site.
const PIVOT_CAP_PER_ROW: usize = 60;

/// Solve the linear quantile regression problem exactly.
pub fn qr_fit(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<DVector<f64>> {
    qr_fit_with(x, y, tau, None)
}

/// Like [`qr_fit`], with an optional warm start. The warm start only affects
/// the path taken (and hence which optimal vertex is reached first), never
/// the attained objective value.
pub fn qr_fit_with(
    x: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if y.len() != n {
        return Err(Error::LengthMismatch { what: "y".into(), got: y.len(), expected: n });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("tau", "must lie in (0, 1)"));
    }
    if n <= d {
        return Err(Error::DegenerateDesign { rank: n, cols: d });
    }

    let row_norms: Vec<f64> = (0..n).map(|i| x.row(i).norm()).collect();

    // Starting point: warm start if provided, otherwise the least-squares
    // solution; the initial vertex interpolates the d smallest-|residual|
    // independent rows relative to that point.
    let start_beta = match warm {
        Some(b) if b.len() == d => b.clone(),
        _ => least_squares(x, y, d)?,
    };
    let mut basis = basis_near(x, y, &start_beta, &row_norms)?;

    let mut state = descend(x, y, tau, &mut basis, &row_norms)?;

    // Alternate lexicographic polish and re-descent until stable. The polish
    // also escapes degenerate vertices where no single edge of the current
    // basis descends.
    for _ in 0..5 {
        let before = state.objective;
        let beta = polish_lex(x, y, tau, &state.beta);
        let after = sum_objective(x, y, tau, &beta);
        if after < before - 1e-12 * (1.0 + before) {
            basis = basis_near(x, y, &beta, &row_norms)?;
            state = descend(x, y, tau, &mut basis, &row_norms)?;
        } else {
            state.beta = beta;
            state.objective = after;
            break;
        }
    }
    Ok(state.beta)
}

struct VertexState {
    beta: DVector<f64>,
    objective: f64,
}

fn least_squares(x: &DMatrix<f64>, y: &[f64], d: usize) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
        return Err(Error::DegenerateDesign { rank, cols: d });
    }
    svd.solve(&DVector::from_column_slice(y), 1e-12 * smax)
        .map_err(|_| Error::DegenerateDesign { rank: 0, cols: d })
}

/// Select d linearly independent rows, preferring small |residual| w.r.t.
/// `beta`. Greedy Gram-Schmidt with a relative tolerance.
fn basis_near(
    x: &DMatrix<f64>,
    y: &[f64],
    beta: &DVector<f64>,
    row_norms: &[f64],
) -> Result<Vec<usize>> {
    let n = x.nrows();
    let d = x.ncols();
    let fitted = x * beta;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        let ra = (y[a] - fitted[a]).abs();
        let rb = (y[b] - fitted[b]).abs();
        ra.partial_cmp(&rb).unwrap().then(a.cmp(&b))
    });

    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut basis = Vec::with_capacity(d);
    for &i in &order {
        if basis.len() == d {
            break;
        }
        if row_norms[i] == 0.0 {
            continue;
        }
        let mut v = x.row(i).transpose();
        for q in &ortho {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
        let nv = v.norm();
        if nv > 1e-10 * row_norms[i] {
            ortho.push(v / nv);
            basis.push(i);
        }
    }
    if basis.len() < d {
        return Err(Error::DegenerateDesign { rank: basis.len(), cols: d });
    }
    basis.sort_unstable();
    Ok(basis)
}

/// Vertex descent until no edge direction improves.
fn descend(
    x: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    basis: &mut Vec<usize>,
    row_norms: &[f64],
) -> Result<VertexState> {
    let n = x.nrows();
    let d = x.ncols();
    let cap = PIVOT_CAP_PER_ROW * n + 200;

    let mut beta = solve_basis(x, y, basis, d)?;
    let mut resid = vec![0.0f64; n];
    let mut s_signed = vec![0.0f64; n];
    for _pivot in 0..cap {
        let xb = gather(x, basis);
        let inv = xb
            .lu()
            .try_inverse()
            .ok_or(Error::DegenerateDesign { rank: d - 1, cols: d })?;
        let fitted = x * &beta;
        for i in 0..n {
            resid[i] = y[i] - fitted[i];
        }
        // all d edge directions at once: column l of S is X·inv.column(l)
        let s_all = x * &inv;
        let eta_norms: Vec<f64> = (0..d).map(|l| inv.column(l).norm()).collect();

        // pick the steepest descending edge; ties go to the first (l, sign)
        let mut best: Option<(f64, usize, f64)> = None;
        for l in 0..d {
            let s_col = s_all.column(l);
            for sign in [1.0f64, -1.0f64] {
                let (deriv, sum_abs) = directional_derivative(
                    &resid,
                    tau,
                    s_col.as_slice(),
                    sign,
                    eta_norms[l],
                    row_norms,
                );
                let tol = 1e-10 * (1.0 + sum_abs);
                if deriv < -tol && best.as_ref().map_or(true, |b| deriv < b.0) {
                    best = Some((deriv, l, sign));
                }
            }
        }
        let Some((deriv, l, sign)) = best else {
            let objective = sum_objective(x, y, tau, &beta);
            return Ok(VertexState { beta, objective });
        };

        for i in 0..n {
            s_signed[i] = sign * s_all[(i, l)];
        }
        let enter = line_search(&resid, &s_signed, deriv, row_norms, eta_norms[l]);
        let Some(enter) = enter else {
            // Slope never turned non-negative within breakpoints; numerically
            // flat direction. Treat the vertex as optimal.
            let objective = sum_objective(x, y, tau, &beta);
            return Ok(VertexState { beta, objective });
        };
        basis[l] = enter;
        basis.sort_unstable();
        beta = solve_basis(x, y, basis, d)?;
    }
    log::warn!("quantile regression pivot cap reached; returning current vertex");
    let objective = sum_objective(x, y, tau, &beta);
    Ok(VertexState { beta, objective })
}

fn gather(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let d = x.ncols();
    let mut out = DMatrix::zeros(rows.len(), d);
    for (k, &i) in rows.iter().enumerate() {
        for j in 0..d {
            out[(k, j)] = x[(i, j)];
        }
    }
    out
}

fn solve_basis(x: &DMatrix<f64>, y: &[f64], basis: &[usize], d: usize) -> Result<DVector<f64>> {
    let xb = gather(x, basis);
    let yb = DVector::from_iterator(basis.len(), basis.iter().map(|&i| y[i]));
    xb.lu().solve(&yb).ok_or(Error::DegenerateDesign { rank: d - 1, cols: d })
}

/// One-sided directional derivative of Σ ρ_τ(y - x'(β + t·sign·η)) at t = 0⁺,
/// counting zero residuals at their worst-case (maximal) subgradient.
/// `s` holds X·η for the unsigned direction. Returns (derivative, Σ|s_i|)
/// for tolerance scaling.
fn directional_derivative(
    resid: &[f64],
    tau: f64,
    s: &[f64],
    sign: f64,
    eta_norm: f64,
    row_norms: &[f64],
) -> (f64, f64) {
    let mut deriv = 0.0;
    let mut sum_abs = 0.0;
    for i in 0..resid.len() {
        let si = sign * s[i];
        if si.abs() <= 1e-12 * row_norms[i] * eta_norm {
            continue;
        }
        sum_abs += si.abs();
        let zi = 1e-9 * (1.0 + resid[i].abs().max(row_norms[i] * eta_norm));
        let ri = resid[i];
        if ri > zi {
            deriv -= tau * si;
        } else if ri < -zi {
            deriv += (1.0 - tau) * si;
        } else if si > 0.0 {
            deriv += (1.0 - tau) * si;
        } else {
            deriv -= tau * si;
        }
    }
    (deriv, sum_abs)
}

/// Exact minimizing step along a descending edge: walk the residual
/// breakpoints in increasing t, adding |s_i| to the slope at each crossing;
/// the entering row is the breakpoint where the slope turns non-negative.
fn line_search(
    resid: &[f64],
    s: &[f64],
    slope_at_zero: f64,
    row_norms: &[f64],
    eta_norm: f64,
) -> Option<usize> {
    let mut bps: Vec<(f64, usize)> = Vec::with_capacity(resid.len() / 2);
    for i in 0..resid.len() {
        let si = s[i];
        if si.abs() <= 1e-12 * row_norms[i] * eta_norm {
            continue;
        }
        let zi = 1e-9 * (1.0 + resid[i].abs().max(row_norms[i] * eta_norm));
        if resid[i].abs() <= zi {
            continue; // already counted in the base slope
        }
        let t = resid[i] / si;
        if t > 0.0 {
            bps.push((t, i));
        }
    }
    bps.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut slope = slope_at_zero;
    for (_, i) in bps {
        slope += s[i].abs();
        if slope >= 0.0 {
            return Some(i);
        }
    }
    None
}

pub(crate) fn sum_objective(x: &DMatrix<f64>, y: &[f64], tau: f64, beta: &DVector<f64>) -> f64 {
    let fitted = x * beta;
    (0..y.len()).map(|i| check_loss(y[i] - fitted[i], tau)).sum()
}

/// Move each coordinate to the lower endpoint of its line-minimizing
/// interval, left to right. On a non-degenerate optimum this is a no-op.
fn polish_lex(x: &DMatrix<f64>, y: &[f64], tau: f64, beta: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let mut beta = beta.clone();
    let mut fitted = x * &beta;
    for k in 0..d {
        // minimize g(t) = Σ ρ_τ(r_i - t·x_ik) over t; take the smallest minimizer
        let mut bps: Vec<(f64, f64)> = Vec::new(); // (t, |slope jump|)
        let mut slope = 0.0; // slope as t -> -inf
        for i in 0..n {
            let sik = x[(i, k)];
            if sik == 0.0 {
                continue;
            }
            let ri = y[i] - fitted[i];
            // residual as a function of t: ri - t·sik, crossing at t = ri/sik
            bps.push((ri / sik, sik.abs()));
            // for t << 0 the residual has the sign of sik
            slope += if sik > 0.0 { -tau * sik } else { (1.0 - tau) * sik };
        }
        if bps.is_empty() {
            continue;
        }
        bps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut t_lo = bps[0].0;
        for (t, jump) in bps {
            if slope >= 0.0 {
                break;
            }
            t_lo = t;
            slope += jump;
        }
        if t_lo != 0.0 {
            let old = beta[k];
            beta[k] = old + t_lo;
            // guard: only keep the move if it does not worsen the objective
            let new_fitted = x * &beta;
            let f_old: f64 = (0..n).map(|i| check_loss(y[i] - fitted[i], tau)).sum();
            let f_new: f64 = (0..n).map(|i| check_loss(y[i] - new_fitted[i], tau)).sum();
            if f_new <= f_old + 1e-10 * (1.0 + f_old) {
                fitted = new_fitted;
            } else {
                beta[k] = old;
            }
        }
    }
    beta
}
