//! Plug-in inference for the L-estimate: score functions, kernel-smoothed
//! Jacobian blocks, per-observation influence terms, and a Bartlett-kernel
//! HAC long-run covariance (Newey & West 1987 style weighting).
//!
//! The influence of observation i on the L-estimate is
//!
//! ```text
//! ĥ_i = ∫ v̂_i(τ) J₁(τ) dτ,
//! v̂_i(τ) = Ĵ₂β(τ)⁻¹ { Ψ₂(s_i, β̂(τ), τ) - Ĵ₂δ(τ) Ĵ₁δ⁻¹ Ψ₁(e_i, z_i) }
//! ```
//!
//! with scores Ψ₁ = (w - z'δ)z and Ψ₂ = 1(x̂'β > 0)(τ - 1{y - x̂'β < 0})x̂,
//! and the long-run covariance of √n(𝓛ₙ - 𝓛₀) is
//!
//! ```text
//! Ω̂ = Γ̂₀ + Σ_{j≥1} K(j/bₙ)(Γ̂_j + Γ̂_j'),   Γ̂_j = (1/n) Σ_i ĥ_i ĥ_{i+j}'.
//! ```
//!
//! The kernel-smoothed Ĵ₂β/Ĵ₂δ blocks carry a 1/(2·n·hₙ) normalization: a
//! bare 1/(2hₙ) sum has no finite limit, so the sample-average form is used
//! throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::cqr::QuantileProcess;
use crate::error::{Error, Result};
use crate::first_stage::FirstStageFit;
use crate::lweights::{midpoint_cell_weights, validate_atom_coverage, LEstimate, WeightMeasure};
use crate::model::{AugmentedDesign, InstrumentDesign};

/// Relative singular-value floor below which a per-τ Jacobian block is
/// flagged unusable.
pub const JACOBIAN_SV_TOL: f64 = 1e-10;

/// HAC kernel choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HacKernel {
    Bartlett,
}

impl HacKernel {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            HacKernel::Bartlett => bartlett_kernel(t),
        }
    }
}

/// Bartlett kernel K(t) = (1 - |t|)·1{|t| ≤ 1}.
#[inline]
pub fn bartlett_kernel(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0 - a
    } else {
        0.0
    }
}

/// Default lag truncation bₙ = ⌊(4n/100)^{1/3}⌋, clamped to ≥ 1.
pub fn default_lag_truncation(n: usize) -> usize {
    let b = (4.0 * n as f64 / 100.0).powf(1.0 / 3.0).floor() as usize;
    b.max(1)
}

/// Default smoothing bandwidth hₙ = σ̂·n^{-1/3}.
pub fn default_bandwidth(sigma_eta: f64, n: usize) -> f64 {
    sigma_eta * (n as f64).powf(-1.0 / 3.0)
}

/// Residual scale σ̂ = median|y - x̂'β̂(τ_med)| / 0.6745 over the active
/// sample at the grid point closest to τ = 0.5, with fallbacks for exact
/// fits and empty active sets.
pub fn residual_scale_at_median(
    x_hat: &AugmentedDesign,
    y: &[f64],
    proc: &QuantileProcess,
) -> f64 {
    let j = proc.grid().nearest(0.5);
    let beta = DVector::from_column_slice(proc.beta_at(j));
    let fitted = x_hat.matrix() * &beta;
    let mut abs: Vec<f64> = (0..y.len())
        .filter(|&i| fitted[i] > 0.0)
        .map(|i| (y[i] - fitted[i]).abs())
        .collect();
    if abs.is_empty() {
        abs = (0..y.len()).map(|i| (y[i] - fitted[i]).abs()).collect();
    }
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = abs[abs.len() / 2];
    let scale = med / 0.6745;
    if scale > 0.0 {
        scale
    } else {
        let mut ay: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        ay.sort_by(|a, b| a.partial_cmp(b).unwrap());
        1e-8 * (1.0 + ay[ay.len() / 2])
    }
}

/// Bandwidth, lag truncation, and kernel for the HAC machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub bandwidth: f64,
    pub lag_trunc: usize,
    pub kernel: HacKernel,
}

impl ScoreConfig {
    pub fn new(bandwidth: f64, lag_trunc: usize, kernel: HacKernel) -> Result<ScoreConfig> {
        if !(bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if lag_trunc == 0 {
            return Err(Error::invalid("lag_trunc", "must be at least 1"));
        }
        Ok(ScoreConfig { bandwidth, lag_trunc, kernel })
    }

    /// Defaults: hₙ = σ̂·n^{-1/3} and bₙ = ⌊(4n/100)^{1/3}⌋ with the
    /// Bartlett kernel.
    pub fn defaults(n: usize, sigma_eta: f64) -> Result<ScoreConfig> {
        ScoreConfig::new(
            default_bandwidth(sigma_eta, n),
            default_lag_truncation(n),
            HacKernel::Bartlett,
        )
    }
}

/// First-stage score Ψ₁(ϑ, z, δ) = (w - z'δ)·z.
pub fn psi1(w_i: f64, z_i: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
    z_i * (w_i - z_i.dot(delta))
}

/// Second-stage score Ψ₂(s, β, τ) = 1(x̂'β > 0)·(τ - 1{y - x̂'β < 0})·x̂.
/// Both indicators are strict, including at the kink.
pub fn psi2(y_i: f64, xhat_i: &DVector<f64>, beta: &[f64], tau: f64) -> DVector<f64> {
    let d = xhat_i.len();
    debug_assert_eq!(beta.len(), d);
    let mut xb = 0.0;
    for j in 0..d {
        xb += xhat_i[j] * beta[j];
    }
    if xb > 0.0 {
        let u = y_i - xb;
        let psi = tau - if u < 0.0 { 1.0 } else { 0.0 };
        xhat_i * psi
    } else {
        DVector::zeros(d)
    }
}

/// Per-τ smoothed Jacobian blocks.
#[derive(Debug, Clone)]
pub struct JacobianAtTau {
    /// Ĵ₂β(τ) = (1/(2nhₙ)) Σ 1(x̂'β̂>0)·1(|y - x̂'β̂| ≤ hₙ)·x̂x̂'.
    pub j2_beta: DMatrix<f64>,
    /// Ĵ₂δ(τ) = (1/(2nhₙ)) Σ ρ̂₁·1(…)·1(…)·x̂z'.
    pub j2_delta: DMatrix<f64>,
    /// τ-specific plug-in ρ̂₁ (last coefficient of β̂(τ)).
    pub rho1: f64,
    /// False when Ĵ₂β(τ) is numerically singular; such τ are excluded from
    /// influence integration (with renormalization) by [`influence_h`].
    pub usable: bool,
}

/// Jacobian plug-ins over the whole grid (plus atom locations).
#[derive(Debug, Clone)]
pub struct JacobianHat {
    /// Ĵ₁δ = (1/n) Σ z_i z_i'.
    pub j1_delta: DMatrix<f64>,
    pub grid: Vec<JacobianAtTau>,
    pub extras: Vec<(f64, JacobianAtTau)>,
    pub bandwidth: f64,
}

impl JacobianHat {
    /// Block lookup at an exact τ (grid point or extra location).
    pub fn at(&self, taus: &[f64], tau: f64) -> Result<&JacobianAtTau> {
        for (j, &t) in taus.iter().enumerate() {
            if (t - tau).abs() <= 1e-12 {
                return Ok(&self.grid[j]);
            }
        }
        for (t, block) in &self.extras {
            if (t - tau).abs() <= 1e-12 {
                return Ok(block);
            }
        }
        Err(Error::AtomOffGrid { tau })
    }
}

fn jacobian_at_tau(
    x_hat: &AugmentedDesign,
    z: &InstrumentDesign,
    y: &[f64],
    beta: &[f64],
    h: f64,
) -> JacobianAtTau {
    let n = x_hat.nrows();
    let d = x_hat.ncols();
    let k = z.ncols();
    let rho1 = beta[d - 1];
    let xm = x_hat.matrix();
    let zm = z.matrix();
    let mut j2b = DMatrix::zeros(d, d);
    let mut j2d = DMatrix::zeros(d, k);
    for i in 0..n {
        let mut xb = 0.0;
        for j in 0..d {
            xb += xm[(i, j)] * beta[j];
        }
        if xb > 0.0 && (y[i] - xb).abs() <= h {
            for a in 0..d {
                let xa = xm[(i, a)];
                for b in 0..d {
                    j2b[(a, b)] += xa * xm[(i, b)];
                }
                for b in 0..k {
                    j2d[(a, b)] += xa * zm[(i, b)];
                }
            }
        }
    }
    let norm = 1.0 / (2.0 * n as f64 * h);
    j2b *= norm;
    j2d *= norm * rho1;

    let svd = j2b.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let usable = smax > 0.0 && smin >= JACOBIAN_SV_TOL * smax;
    JacobianAtTau { j2_beta: j2b, j2_delta: j2d, rho1, usable }
}

/// Compute Ĵ₁δ and the per-τ blocks for every grid point and extra fit
/// location of the process. Singular Ĵ₂β(τ) blocks are flagged, not fatal.
pub fn jacobian_hat(
    x_hat: &AugmentedDesign,
    z: &InstrumentDesign,
    y: &[f64],
    proc: &QuantileProcess,
    cfg: &ScoreConfig,
) -> Result<JacobianHat> {
    let n = z.nrows();
    if x_hat.nrows() != n || y.len() != n {
        return Err(Error::LengthMismatch { what: "y".into(), got: y.len(), expected: n });
    }
    let zm = z.matrix();
    let j1_delta = zm.transpose() * zm / n as f64;

    let h = cfg.bandwidth;
    let grid: Vec<JacobianAtTau> =
        (0..proc.len()).map(|j| jacobian_at_tau(x_hat, z, y, proc.beta_at(j), h)).collect();
    let extras: Vec<(f64, JacobianAtTau)> = proc
        .extras()
        .iter()
        .map(|(t, fit)| (*t, jacobian_at_tau(x_hat, z, y, fit.beta.as_slice(), h)))
        .collect();
    let n_singular = grid.iter().filter(|b| !b.usable).count();
    if n_singular > 0 {
        log::warn!(
            "jacobian: {n_singular}/{} grid points numerically singular; they will be \
             excluded from influence integration with mass renormalization",
            grid.len()
        );
    }
    Ok(JacobianHat { j1_delta, grid, extras, bandwidth: h })
}

/// Influence rows ĥ_i = ∫ v̂_i(τ) J₁(τ) dτ + Σ atoms, an n × (p+2) matrix.
///
/// Quadrature follows the same midpoint cells as the L-estimate itself.
/// Unusable (singular) τ locations are dropped and the remaining weight mass
/// is rescaled to the original total.
pub fn influence_h(
    x_hat: &AugmentedDesign,
    z: &InstrumentDesign,
    y: &[f64],
    fs: &FirstStageFit,
    proc: &QuantileProcess,
    jac: &JacobianHat,
    mu: &WeightMeasure,
) -> Result<DMatrix<f64>> {
    let n = x_hat.nrows();
    let d = x_hat.ncols();
    validate_atom_coverage(mu, proc.grid())?;
    let (cell_weights, _) = midpoint_cell_weights(mu, proc.grid())?;

    // weight bookkeeping with singular exclusions
    let mut kept = 0.0;
    let mut total = 0.0;
    for (j, &w) in cell_weights.iter().enumerate() {
        total += w;
        if jac.grid[j].usable {
            kept += w;
        }
    }
    let taus = proc.grid().points();
    let mut atom_terms: Vec<(f64, f64, &JacobianAtTau, &[f64])> = Vec::new();
    for &(loc, mass) in mu.atoms() {
        let fit = proc.value_at(loc)?;
        let block = jac.at(taus, loc)?;
        total += mass;
        if block.usable {
            kept += mass;
            atom_terms.push((loc, mass, block, fit.beta.as_slice()));
        }
    }
    if kept <= 0.0 {
        return Err(Error::NoUsableGridPoints);
    }
    let rescale = total / kept;

    let j1_lu = jac.j1_delta.clone().lu();
    let mut h = DMatrix::zeros(n, d);

    let add_location = |w: f64,
                        block: &JacobianAtTau,
                        beta: &[f64],
                        tau: f64,
                        h: &mut DMatrix<f64>|
     -> Result<()> {
        // v̂_i = M·Ψ₂(i) - C·Ψ₁(i), with M = Ĵ₂β⁻¹ and C = Ĵ₂β⁻¹ Ĵ₂δ Ĵ₁δ⁻¹
        let m = block
            .j2_beta
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::NoUsableGridPoints)?;
        let j1_inv_j2d_t = j1_lu
            .solve(&block.j2_delta.transpose())
            .ok_or(Error::SingularDesign { smallest: 0.0, tol: 0.0 })?;
        let c = &m * j1_inv_j2d_t.transpose();
        for i in 0..n {
            let xi = x_hat.row(i);
            let zi = z.row(i);
            let p2 = psi2(y[i], &xi, beta, tau);
            let p1 = zi * fs.residuals[i];
            let v = &m * p2 - &c * p1;
            for a in 0..d {
                h[(i, a)] += w * v[a];
            }
        }
        Ok(())
    };

    for (j, &w) in cell_weights.iter().enumerate() {
        if w == 0.0 || !jac.grid[j].usable {
            continue;
        }
        add_location(w * rescale, &jac.grid[j], proc.beta_at(j), taus[j], &mut h)?;
    }
    for (loc, mass, block, beta) in atom_terms {
        add_location(mass * rescale, block, beta, loc, &mut h)?;
    }
    Ok(h)
}

/// HAC covariance of √n(𝓛ₙ - 𝓛₀) with kernel and bandwidth metadata.
#[derive(Debug, Clone)]
pub struct OmegaHat {
    pub matrix: DMatrix<f64>,
    pub config: ScoreConfig,
    pub grid_fingerprint: u64,
}

impl OmegaHat {
    /// Minimum eigenvalue; the numerical-PSD check is min_eig ≥ -1e-8·trace.
    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.min()
    }

    pub fn is_numerically_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-8 * self.matrix.trace().abs().max(f64::MIN_POSITIVE)
    }
}

/// Kernel-weighted sum of lagged outer products of the influence rows:
/// Γ̂₀ + Σ_{j≥1} K(j/bₙ)(Γ̂_j + Γ̂_j'), symmetrized.
pub fn omega_hat(h: &DMatrix<f64>, cfg: &ScoreConfig, grid_fingerprint: u64) -> Result<OmegaHat> {
    let n = h.nrows();
    let d = h.ncols();
    if n < 2 {
        return Err(Error::TooFewRows { n, min: 2 });
    }
    let mut omega = DMatrix::<f64>::zeros(d, d);
    // j = 0 term
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                omega[(a, b)] += h[(i, a)] * h[(i, b)];
            }
        }
    }
    // lagged terms; the kernel support cuts the sum at j < bₙ
    for j in 1..n {
        let k = cfg.kernel.eval(j as f64 / cfg.lag_trunc as f64);
        if k == 0.0 {
            break;
        }
        let mut gamma = DMatrix::<f64>::zeros(d, d);
        for i in 0..n - j {
            for a in 0..d {
                for b in 0..d {
                    gamma[(a, b)] += h[(i, a)] * h[(i + j, b)];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                omega[(a, b)] += k * (gamma[(a, b)] + gamma[(b, a)]);
            }
        }
    }
    omega /= n as f64;
    let sym = (&omega + omega.transpose()) * 0.5;
    Ok(OmegaHat { matrix: sym, config: *cfg, grid_fingerprint })
}

/// The four kernel-weighted score covariance blocks V̂(τ, τ').
#[derive(Debug, Clone)]
pub struct VHat {
    pub v_delta_delta: DMatrix<f64>,
    pub v_beta_beta: DMatrix<f64>,
    pub v_beta_delta: DMatrix<f64>,
    pub v_delta_beta: DMatrix<f64>,
    pub tau: f64,
    pub tau_prime: f64,
}

/// Two-sided kernel-weighted cross-covariance of two score series:
/// Σ_{|j|<bₙ} K(j/bₙ)·(1/n)·Σ_i a_i b_{i+j}'.
fn hac_cross(a: &[DVector<f64>], b: &[DVector<f64>], cfg: &ScoreConfig) -> DMatrix<f64> {
    let n = a.len();
    let ra = a[0].len();
    let rb = b[0].len();
    let mut out = DMatrix::<f64>::zeros(ra, rb);
    for i in 0..n {
        out += &a[i] * b[i].transpose();
    }
    for j in 1..n {
        let k = cfg.kernel.eval(j as f64 / cfg.lag_trunc as f64);
        if k == 0.0 {
            break;
        }
        let mut fwd = DMatrix::<f64>::zeros(ra, rb);
        let mut bwd = DMatrix::<f64>::zeros(ra, rb);
        for i in 0..n - j {
            fwd += &a[i] * b[i + j].transpose();
            bwd += &a[i + j] * b[i].transpose();
        }
        out += (fwd + bwd) * k;
    }
    out / n as f64
}

/// Plug-in score covariance blocks at (τ, τ'). Both τ values must be exact
/// process locations (grid points or extras).
#[allow(clippy::too_many_arguments)]
pub fn hac_v_hat(
    x_hat: &AugmentedDesign,
    z: &InstrumentDesign,
    y: &[f64],
    fs: &FirstStageFit,
    proc: &QuantileProcess,
    cfg: &ScoreConfig,
    tau: f64,
    tau_prime: f64,
) -> Result<VHat> {
    let n = x_hat.nrows();
    let beta_tau = proc.value_at(tau)?.beta.as_slice().to_vec();
    let beta_tau_p = proc.value_at(tau_prime)?.beta.as_slice().to_vec();

    let psi1_series: Vec<DVector<f64>> = (0..n).map(|i| z.row(i) * fs.residuals[i]).collect();
    let psi2_tau: Vec<DVector<f64>> =
        (0..n).map(|i| psi2(y[i], &x_hat.row(i), &beta_tau, tau)).collect();
    let psi2_tau_p: Vec<DVector<f64>> =
        (0..n).map(|i| psi2(y[i], &x_hat.row(i), &beta_tau_p, tau_prime)).collect();

    let v_delta_delta = hac_cross(&psi1_series, &psi1_series, cfg);
    let v_beta_beta = hac_cross(&psi2_tau, &psi2_tau_p, cfg);
    let v_beta_delta = hac_cross(&psi2_tau, &psi1_series, cfg);
    let v_delta_beta = v_beta_delta.transpose();
    Ok(VHat { v_delta_delta, v_beta_beta, v_beta_delta, v_delta_beta, tau, tau_prime })
}

/// Asymptotic covariance of √n(β̂(τ) - β₀(τ)) via the four-term sandwich
///
/// ```text
/// Ĵ₂β⁻¹ { V̂ββ - V̂βδ Ĵ₁δ⁻ᵀ Ĵ₂δᵀ - Ĵ₂δ Ĵ₁δ⁻¹ V̂δβ
///        + Ĵ₂δ (Ĵ₁δ⁻¹ V̂δδ Ĵ₁δ⁻ᵀ) Ĵ₂δᵀ } Ĵ₂β⁻ᵀ
/// ```
///
/// which is the (1,1) block of the joint sandwich J(τ)⁻¹ V(τ,τ') J(τ)⁻ᵀ. The
/// first-stage variance enters through the Ĵ₂δ cross-Jacobian; when Ĵ₂δ = 0
/// (no control-function coefficient) every correction vanishes and the
/// exogenous formula Ĵ₂β⁻¹ V̂ββ Ĵ₂β⁻ᵀ remains.
#[derive(Debug, Clone)]
pub struct BetaTauCovariance {
    pub covariance: DMatrix<f64>,
    /// The exogenous-case formula without the three correction terms, for
    /// diagnostics on how much the first stage inflates the variance.
    pub exogenous_formula: DMatrix<f64>,
    pub tau: f64,
}

pub fn beta_tau_covariance(
    block: &JacobianAtTau,
    j1_delta: &DMatrix<f64>,
    v: &VHat,
) -> Result<BetaTauCovariance> {
    if !block.usable {
        return Err(Error::NoUsableGridPoints);
    }
    let j2b_inv = block
        .j2_beta
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::NoUsableGridPoints)?;
    let j1_inv = j1_delta
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularDesign { smallest: 0.0, tol: 0.0 })?;

    // V_{δδ} propagated through the first stage: Ĵ₁δ⁻¹ V̂_δδ Ĵ₁δ⁻ᵀ
    let first_stage_var = &j1_inv * &v.v_delta_delta * j1_inv.transpose();

    let t2 = &v.v_beta_delta * j1_inv.transpose() * block.j2_delta.transpose();
    let t3 = &block.j2_delta * &j1_inv * &v.v_delta_beta;
    let t4 = &block.j2_delta * &first_stage_var * block.j2_delta.transpose();

    let assemble = |inner: DMatrix<f64>| -> DMatrix<f64> {
        let cov = &j2b_inv * inner * j2b_inv.transpose();
        if v.tau == v.tau_prime {
            (&cov + cov.transpose()) * 0.5
        } else {
            cov
        }
    };
    let covariance = assemble(&v.v_beta_beta - &t2 - &t3 + &t4);
    let exogenous_formula = assemble(v.v_beta_beta.clone());
    Ok(BetaTauCovariance { covariance, exogenous_formula, tau: v.tau })
}

/// Per-coordinate confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordInterval {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
}

/// Confidence intervals for the L-estimate coordinates plus the PSD square
/// root needed to standardize the full vector.
#[derive(Debug, Clone)]
pub struct CiReport {
    pub level: f64,
    pub z_value: f64,
    pub intervals: Vec<CoordInterval>,
    /// Ω̂^{-1/2} (symmetric PSD pseudo-inverse square root).
    pub omega_inv_sqrt: DMatrix<f64>,
    pub n: usize,
}

impl CiReport {
    /// √n·Ω̂^{-1/2}(𝓛ₙ - l0), the standardized statistic.
    pub fn standardized_statistic(&self, l: &LEstimate, l0: &DVector<f64>) -> DVector<f64> {
        let diff = l.vector() - l0;
        &self.omega_inv_sqrt * diff * (self.n as f64).sqrt()
    }
}

/// Coordinate intervals 𝓛ₙₖ ± z_{1-α/2}·√(Ω̂ₖₖ/n).
pub fn l_confidence_interval(
    l: &LEstimate,
    om: &OmegaHat,
    n: usize,
    level: f64,
) -> Result<CiReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", "must lie in (0, 1)"));
    }
    let eig = om.matrix.clone().symmetric_eigen();
    let trace = om.matrix.trace().abs().max(f64::MIN_POSITIVE);
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 * trace {
        return Err(Error::NonPsd { min_eig });
    }

    let z = statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);

    let d = om.matrix.nrows();
    let mut intervals = Vec::with_capacity(d);
    for k in 0..d {
        let var = om.matrix[(k, k)].max(0.0);
        let se = (var / n as f64).sqrt();
        let est = l.value[k];
        let degenerate = !(se > 0.0);
        if degenerate {
            log::warn!("zero-width confidence interval for coordinate {k}");
        }
        intervals.push(CoordInterval {
            estimate: est,
            se,
            lo: est - z * se,
            hi: est + z * se,
            degenerate,
        });
    }

    // symmetric PSD pseudo-inverse square root from the eigendecomposition
    let max_eig = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let mut inv_sqrt_diag = DMatrix::zeros(d, d);
    for k in 0..d {
        let lam = eig.eigenvalues[k].max(0.0);
        inv_sqrt_diag[(k, k)] = if lam > 1e-14 * max_eig { 1.0 / lam.sqrt() } else { 0.0 };
    }
    let q = &eig.eigenvectors;
    let omega_inv_sqrt = q * inv_sqrt_diag * q.transpose();

    Ok(CiReport { level, z_value: z, intervals, omega_inv_sqrt, n })
}
