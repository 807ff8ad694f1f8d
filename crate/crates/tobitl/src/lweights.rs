//! Weight measures μ = α·λ + (1-α)·ν on (0,1) and integration of the
//! coefficient process into L-estimates
//!
//! ```text
//! 𝓛 = ∫ β̂(τ) J₁(τ) dτ + Σ_k m_k · β̂(τ_k)
//! ```
//!
//! with an absolutely continuous part (density `J₁`) and point masses. The
//! built-in weights are the trimmed mean, the Winsorized mean (density plus
//! boundary atoms), the parabolic density `6τ(1-τ)`, a single point mass,
//! and kernel-smoothed quantiles. Weights flagged as location functionals
//! carry total mass 1, which makes the L-estimate equivariant under affine
//! maps of the response.
//!
//! The deterministic scheme is a composite midpoint rule over the process
//! grid with the density integrated exactly (Gauss-Legendre) over each cell,
//! so mass-1 weights reproduce constants exactly; atoms are always evaluated
//! at their exact location, never interpolated.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cqr::{QuantileGrid, QuantileProcess};
use crate::error::{Error, Result};

/// Gauss-Legendre 5-point rule on [-1, 1]; exact through degree 9.
const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Smoothing kernel on [-1, 1] for smoothed-quantile weights.
#[derive(Clone)]
pub enum Kernel {
    /// K(u) = ½·1{|u| ≤ 1}
    Uniform,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Kernel {
    fn eval(&self, u: f64) -> f64 {
        match self {
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Custom(f) => f(u),
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Uniform => write!(f, "Uniform"),
            Kernel::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Absolutely continuous part of a weight measure.
#[derive(Clone)]
enum Density {
    Constant { support: (f64, f64), value: f64 },
    /// coeffs\[k\] multiplies τ^k
    Polynomial { support: (f64, f64), coeffs: Vec<f64> },
    Kern { support: (f64, f64), pi: f64, h: f64, kernel: Kernel },
    Custom { support: (f64, f64), f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant { support, value } => {
                write!(f, "Constant({value} on {support:?})")
            }
            Density::Polynomial { support, coeffs } => {
                write!(f, "Polynomial({coeffs:?} on {support:?})")
            }
            Density::Kern { support, pi, h, kernel } => {
                write!(f, "Kernel({kernel:?}, pi={pi}, h={h} on {support:?})")
            }
            Density::Custom { support, .. } => write!(f, "Custom(on {support:?})"),
        }
    }
}

impl Density {
    fn support(&self) -> (f64, f64) {
        match self {
            Density::Constant { support, .. }
            | Density::Polynomial { support, .. }
            | Density::Kern { support, .. }
            | Density::Custom { support, .. } => *support,
        }
    }

    fn eval(&self, tau: f64) -> f64 {
        let (a, b) = self.support();
        if tau < a || tau > b {
            return 0.0;
        }
        match self {
            Density::Constant { value, .. } => *value,
            Density::Polynomial { coeffs, .. } => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * tau + c;
                }
                acc
            }
            Density::Kern { pi, h, kernel, .. } => kernel.eval((tau - pi) / h) / h,
            Density::Custom { f, .. } => f(tau),
        }
    }

    /// ∫ density over [lo, hi] ∩ support, Gauss-Legendre per call.
    fn mass_on(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = self.support();
        let lo = lo.max(a);
        let hi = hi.min(b);
        if hi <= lo {
            return 0.0;
        }
        match self {
            Density::Constant { value, .. } => value * (hi - lo),
            Density::Polynomial { .. } | Density::Kern { .. } | Density::Custom { .. } => {
                let c = 0.5 * (lo + hi);
                let r = 0.5 * (hi - lo);
                GL5.iter().map(|&(u, w)| w * self.eval(c + r * u)).sum::<f64>() * r
            }
        }
    }

    /// Total density mass via a fine composite rule (exact for the
    /// polynomial cases, high-order otherwise).
    fn total_mass(&self) -> f64 {
        let (a, b) = self.support();
        let cells = 256;
        let h = (b - a) / cells as f64;
        (0..cells).map(|k| self.mass_on(a + k as f64 * h, a + (k + 1) as f64 * h)).sum()
    }
}

/// Tag describing a built-in weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Trimmed { alpha_t: f64 },
    Winsorized { alpha_t: f64 },
    Parabolic,
    PointMass { tau: f64 },
    SmoothedQuantile { pi: f64, h: f64 },
    Custom,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::Trimmed { alpha_t } => write!(f, "trimmed:{alpha_t}"),
            WeightKind::Winsorized { alpha_t } => write!(f, "winsorized:{alpha_t}"),
            WeightKind::Parabolic => write!(f, "parabolic"),
            WeightKind::PointMass { tau } => write!(f, "point:{tau}"),
            WeightKind::SmoothedQuantile { pi, h } => write!(f, "smoothq:{pi},{h}"),
            WeightKind::Custom => write!(f, "custom"),
        }
    }
}

/// A weight measure: optional density plus point masses.
#[derive(Debug, Clone)]
pub struct WeightMeasure {
    kind: WeightKind,
    density: Option<Density>,
    atoms: Vec<(f64, f64)>,
    location: bool,
    truncate_to_grid: bool,
}

impl WeightMeasure {
    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Whether the measure is a probability measure (location functional).
    pub fn is_location(&self) -> bool {
        self.location
    }

    /// Density value J₁(τ), zero outside the support.
    pub fn density(&self, tau: f64) -> f64 {
        self.density.as_ref().map_or(0.0, |d| d.eval(tau))
    }

    pub fn density_support(&self) -> Option<(f64, f64)> {
        self.density.as_ref().map(|d| d.support())
    }

    /// Total mass: density integral plus atom masses.
    pub fn total_mass(&self) -> f64 {
        let dm = self.density.as_ref().map_or(0.0, |d| d.total_mass());
        dm + self.atoms.iter().map(|&(_, m)| m).sum::<f64>()
    }
}

/// Trimmed mean: constant density 1/(1-2α̃) on (α̃, 1-α̃), no atoms.
pub fn trimmed_weight(alpha_t: f64) -> Result<WeightMeasure> {
    if !(alpha_t > 0.0 && alpha_t < 0.5) {
        return Err(Error::invalid("alpha_t", "must lie in (0, 0.5)"));
    }
    Ok(WeightMeasure {
        kind: WeightKind::Trimmed { alpha_t },
        density: Some(Density::Constant {
            support: (alpha_t, 1.0 - alpha_t),
            value: 1.0 / (1.0 - 2.0 * alpha_t),
        }),
        atoms: vec![],
        location: true,
        truncate_to_grid: false,
    })
}

/// Winsorized mean: density 1 on (α̃, 1-α̃) plus atoms of mass α̃ at α̃ and
/// 1-α̃; total mass (1-2α̃) + 2α̃ = 1.
pub fn winsorized_weight(alpha_t: f64) -> Result<WeightMeasure> {
    if !(alpha_t > 0.0 && alpha_t < 0.5) {
        return Err(Error::invalid("alpha_t", "must lie in (0, 0.5)"));
    }
    Ok(WeightMeasure {
        kind: WeightKind::Winsorized { alpha_t },
        density: Some(Density::Constant { support: (alpha_t, 1.0 - alpha_t), value: 1.0 }),
        atoms: vec![(alpha_t, alpha_t), (1.0 - alpha_t, alpha_t)],
        location: true,
        truncate_to_grid: false,
    })
}

/// Parabolic density 6τ(1-τ) on (0,1). The process is only available on
/// `[τ₀, 1-τ₀]`, so at integration time the density is truncated to the grid
/// range and renormalized back to mass 1; the renormalization constant is
/// recorded on the resulting estimate.
pub fn parabolic_weight() -> WeightMeasure {
    WeightMeasure {
        kind: WeightKind::Parabolic,
        density: Some(Density::Polynomial { support: (0.0, 1.0), coeffs: vec![0.0, 6.0, -6.0] }),
        atoms: vec![],
        location: true,
        truncate_to_grid: true,
    }
}

/// Single point mass at τ.
pub fn point_mass_weight(tau: f64) -> Result<WeightMeasure> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("tau", "must lie in (0, 1)"));
    }
    Ok(WeightMeasure {
        kind: WeightKind::PointMass { tau },
        density: None,
        atoms: vec![(tau, 1.0)],
        location: true,
        truncate_to_grid: false,
    })
}

/// Smoothed quantile: density (1/h)·K((τ-π)/h) supported on [π-h, π+h],
/// for a symmetric density kernel K on [-1, 1] and bandwidth
/// 0 < h < min(π, 1-π).
pub fn smoothed_quantile_weight(kernel: Kernel, pi: f64, h: f64) -> Result<WeightMeasure> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid("pi", "must lie in (0, 1)"));
    }
    if !(h > 0.0 && h < pi.min(1.0 - pi)) {
        return Err(Error::invalid("h", "must satisfy 0 < h < min(pi, 1 - pi)"));
    }
    let mu = WeightMeasure {
        kind: WeightKind::SmoothedQuantile { pi, h },
        density: Some(Density::Kern { support: (pi - h, pi + h), pi, h, kernel }),
        atoms: vec![],
        location: true,
        truncate_to_grid: false,
    };
    let mass = mu.total_mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("kernel", format!("must integrate to 1, got {mass}")));
    }
    Ok(mu)
}

/// Custom weight from a density closure and atoms. When `location` is set
/// the total mass must be 1 within 1e-9.
pub fn custom_weight(
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: (f64, f64),
    atoms: Vec<(f64, f64)>,
    location: bool,
) -> Result<WeightMeasure> {
    if !(support.0 < support.1) {
        return Err(Error::invalid("support", "must be a nonempty interval"));
    }
    for &(t, m) in &atoms {
        if !(t > 0.0 && t < 1.0) || !(m > 0.0) {
            return Err(Error::invalid("atoms", "locations in (0,1) with positive mass"));
        }
    }
    let mu = WeightMeasure {
        kind: WeightKind::Custom,
        density: Some(Density::Custom { support, f }),
        atoms,
        location,
        truncate_to_grid: false,
    };
    if location {
        let mass = mu.total_mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "mass",
                format!("location functional requires total mass 1, got {mass}"),
            ));
        }
    }
    Ok(mu)
}

/// Serializable weight request, used by config files and the CLI
/// (`kind[:params]` strings).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightSpec(pub WeightKind);

impl WeightSpec {
    pub fn build(&self) -> Result<WeightMeasure> {
        match self.0 {
            WeightKind::Trimmed { alpha_t } => trimmed_weight(alpha_t),
            WeightKind::Winsorized { alpha_t } => winsorized_weight(alpha_t),
            WeightKind::Parabolic => Ok(parabolic_weight()),
            WeightKind::PointMass { tau } => point_mass_weight(tau),
            WeightKind::SmoothedQuantile { pi, h } => {
                smoothed_quantile_weight(Kernel::Uniform, pi, h)
            }
            WeightKind::Custom => {
                Err(Error::invalid("weight", "custom weights cannot be built from a spec"))
            }
        }
    }

    pub fn label(&self) -> String {
        self.0.to_string()
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<WeightSpec> {
        let bad = |reason: &str| Error::InvalidWeightSpec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), Some(r.trim())),
            None => (s.trim(), None),
        };
        let one = |rest: Option<&str>| -> Result<f64> {
            rest.ok_or_else(|| bad("missing parameter"))?
                .parse::<f64>()
                .map_err(|_| bad("parameter is not a number"))
        };
        let kind = match kind {
            "trimmed" => WeightKind::Trimmed { alpha_t: one(rest)? },
            "winsorized" => WeightKind::Winsorized { alpha_t: one(rest)? },
            "parabolic" => WeightKind::Parabolic,
            "point" => WeightKind::PointMass { tau: one(rest)? },
            "smoothq" => {
                let r = rest.ok_or_else(|| bad("missing pi,h parameters"))?;
                let parts: Vec<&str> = r.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(bad("expected smoothq:pi,h"));
                }
                let pi = parts[0].parse().map_err(|_| bad("pi is not a number"))?;
                let h = parts[1].parse().map_err(|_| bad("h is not a number"))?;
                WeightKind::SmoothedQuantile { pi, h }
            }
            _ => return Err(bad("unknown kind (trimmed|winsorized|parabolic|point|smoothq)")),
        };
        let spec = WeightSpec(kind);
        spec.build()?; // validate parameters eagerly
        Ok(spec)
    }
}

/// Integration scheme for the L-estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum IntegrationScheme {
    /// Composite midpoint rule over the grid cells; atoms exact.
    Midpoint,
    /// Average of β̂(τ_j)·J₁(τ_j) over `draws` uniform τ draws; atoms exact.
    MonteCarlo { draws: usize, seed: u64 },
}

/// An integrated L-estimate with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LEstimate {
    pub value: Vec<f64>,
    pub weight: WeightKind,
    pub scheme: IntegrationScheme,
    pub grid_fingerprint: u64,
    /// Present when the density was truncated to the grid range.
    pub renormalization: Option<f64>,
}

impl LEstimate {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.value)
    }
}

enum PathSource<'a> {
    Process(&'a QuantileProcess),
    Path(&'a dyn Fn(f64) -> DVector<f64>),
}

impl PathSource<'_> {
    fn dim(&self, grid: &QuantileGrid) -> usize {
        match self {
            PathSource::Process(p) => p.dim(),
            PathSource::Path(f) => f(grid.points()[0]).len(),
        }
    }

    fn at_grid(&self, grid: &QuantileGrid, j: usize) -> DVector<f64> {
        match self {
            PathSource::Process(p) => DVector::from_column_slice(p.beta_at(j)),
            PathSource::Path(f) => f(grid.points()[j]),
        }
    }

    fn at_exact(&self, tau: f64) -> Result<DVector<f64>> {
        match self {
            PathSource::Process(p) => Ok(DVector::from_column_slice(p.value_at(tau)?.beta.as_slice())),
            PathSource::Path(f) => Ok(f(tau)),
        }
    }

    fn at_free(&self, grid: &QuantileGrid, tau: f64) -> DVector<f64> {
        match self {
            PathSource::Process(p) => p.interpolate(tau),
            PathSource::Path(f) => {
                let _ = grid;
                f(tau)
            }
        }
    }
}

/// Density truncation bookkeeping: effective support and renormalization.
struct EffectiveDensity<'a> {
    density: &'a Density,
    lo: f64,
    hi: f64,
    renorm: f64,
}

fn effective_density<'a>(
    mu: &'a WeightMeasure,
    grid: &QuantileGrid,
) -> Result<Option<EffectiveDensity<'a>>> {
    let (glo, ghi) = grid.range();
    let Some(density) = &mu.density else { return Ok(None) };
    let (a, b) = density.support();
    if mu.truncate_to_grid {
        let lo = a.max(glo);
        let hi = b.min(ghi);
        if hi <= lo {
            return Err(Error::SupportUncovered { lo: a, hi: b, grid_lo: glo, grid_hi: ghi });
        }
        let full = density.total_mass();
        let trunc = density.mass_on(lo, hi);
        Ok(Some(EffectiveDensity { density, lo, hi, renorm: full / trunc }))
    } else {
        if a < glo - 1e-12 || b > ghi + 1e-12 {
            return Err(Error::SupportUncovered { lo: a, hi: b, grid_lo: glo, grid_hi: ghi });
        }
        Ok(Some(EffectiveDensity { density, lo: a, hi: b, renorm: 1.0 }))
    }
}

/// Validate that all atom locations fall inside the grid coverage.
pub(crate) fn validate_atom_coverage(mu: &WeightMeasure, grid: &QuantileGrid) -> Result<()> {
    let (glo, ghi) = grid.range();
    for &(loc, _) in mu.atoms() {
        if loc < glo - 1e-12 || loc > ghi + 1e-12 {
            return Err(Error::SupportUncovered { lo: loc, hi: loc, grid_lo: glo, grid_hi: ghi });
        }
    }
    Ok(())
}

/// Composite-midpoint cell weights for the density part: per grid point, the
/// exact density mass of its cell (clipped to the effective support), after
/// any truncation renormalization. Returns the weights and the
/// renormalization constant when one was applied.
pub(crate) fn midpoint_cell_weights(
    mu: &WeightMeasure,
    grid: &QuantileGrid,
) -> Result<(Vec<f64>, Option<f64>)> {
    let eff = effective_density(mu, grid)?;
    let renorm = eff.as_ref().and_then(|e| if e.renorm != 1.0 { Some(e.renorm) } else { None });
    let mut weights = vec![0.0; grid.len()];
    if let Some(e) = &eff {
        for (j, (clo, chi)) in grid.cells().into_iter().enumerate() {
            let lo = clo.max(e.lo);
            let hi = chi.min(e.hi);
            if hi > lo {
                weights[j] = e.renorm * e.density.mass_on(lo, hi);
            }
        }
    }
    Ok((weights, renorm))
}

fn integrate_source(
    source: &PathSource<'_>,
    grid: &QuantileGrid,
    mu: &WeightMeasure,
    scheme: &IntegrationScheme,
) -> Result<(DVector<f64>, Option<f64>)> {
    validate_atom_coverage(mu, grid)?;

    let d = source.dim(grid);
    let mut acc = DVector::zeros(d);
    let renorm;

    match scheme {
        IntegrationScheme::Midpoint => {
            let (weights, r) = midpoint_cell_weights(mu, grid)?;
            renorm = r;
            for (j, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    acc.axpy(w, &source.at_grid(grid, j), 1.0);
                }
            }
        }
        IntegrationScheme::MonteCarlo { draws, seed } => {
            let eff = effective_density(mu, grid)?;
            renorm = eff.as_ref().and_then(|e| if e.renorm != 1.0 { Some(e.renorm) } else { None });
            if let Some(e) = &eff {
                if *draws == 0 {
                    return Err(Error::invalid("draws", "must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut sum = DVector::zeros(d);
                for _ in 0..*draws {
                    let tau: f64 = rng.gen::<f64>();
                    if tau < e.lo || tau > e.hi {
                        continue;
                    }
                    let j1 = e.renorm * e.density.eval(tau);
                    if j1 != 0.0 {
                        sum.axpy(j1, &source.at_free(grid, tau), 1.0);
                    }
                }
                acc += sum / *draws as f64;
            }
        }
    }

    for &(loc, mass) in mu.atoms() {
        acc.axpy(mass, &source.at_exact(loc)?, 1.0);
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("estimate", "non-finite integrated value"));
    }
    Ok((acc, renorm))
}

/// Integrate a fitted quantile process against a weight measure.
///
/// Atoms are resolved exactly: their locations must coincide with a grid
/// point or with an extra location the process was fitted at
/// ([`crate::cqr::quantile_process_at`]).
pub fn integrate_process(
    proc: &QuantileProcess,
    mu: &WeightMeasure,
    scheme: &IntegrationScheme,
) -> Result<LEstimate> {
    let (value, renormalization) =
        integrate_source(&PathSource::Process(proc), proc.grid(), mu, scheme)?;
    Ok(LEstimate {
        value: value.iter().copied().collect(),
        weight: mu.kind(),
        scheme: *scheme,
        grid_fingerprint: proc.grid().fingerprint(),
        renormalization,
    })
}

/// Apply the same quadrature to a known coefficient path (population
/// target 𝓛₀ for simulations).
pub fn population_l0(
    path: &dyn Fn(f64) -> DVector<f64>,
    grid: &QuantileGrid,
    mu: &WeightMeasure,
    scheme: &IntegrationScheme,
) -> Result<DVector<f64>> {
    let (value, _) = integrate_source(&PathSource::Path(path), grid, mu, scheme)?;
    Ok(value)
}
