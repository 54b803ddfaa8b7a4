//! Regularization-parameter selection: GCV, L-curve corner, discrepancy
//! principle, and the noise-driven λ estimate for variational solvers.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, DeblurError, Result};
use crate::filters::{filter_factors, FilterSpec};
use crate::operator::LinearOperator;
use crate::spectral::SvdTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Gcv,
    Lcurve,
    Discrepancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectedParameter {
    Alpha(f64),
    Truncation(usize),
}

impl SelectedParameter {
    pub fn filter(self) -> FilterSpec {
        match self {
            SelectedParameter::Alpha(alpha) => FilterSpec::Tikhonov { alpha },
            SelectedParameter::Truncation(k) => FilterSpec::Tsvd { k },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LcurvePoint {
    pub alpha: f64,
    pub log_residual: f64,
    pub log_solution: f64,
    /// Signed Menger curvature; zero at the two endpoints.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "points", rename_all = "lowercase")]
pub enum Curve {
    /// `(parameter, G(parameter))`.
    Gcv(Vec<(f64, f64)>),
    Lcurve(Vec<LcurvePoint>),
    /// Bisection iterates `(alpha, residual norm)`.
    Discrepancy(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub parameter: SelectedParameter,
    /// Position of the chosen parameter in the evaluated grid.
    pub index: Option<usize>,
    pub curve: Curve,
    pub achieved_residual: Option<f64>,
}

/// Number of points in [`default_alpha_grid`].
pub const DEFAULT_GRID_POINTS: usize = 60;

/// `points` log-spaced values over `[σ_min⁺, σ₁]`, ascending.
pub fn default_alpha_grid(sigma: &DVector<f64>, points: usize) -> Result<Vec<f64>> {
    let hi = sigma.iter().copied().fold(0.0, f64::max);
    let lo = sigma.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    if !(hi > 0.0) {
        return Err(invalid("operator has no positive singular value"));
    }
    log_grid(lo, hi, points)
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(invalid(format!("bad log grid [{lo}, {hi}] with {points} points")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|t| (a + (b - a) * t as f64 / (points - 1) as f64).exp())
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("parameter grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a > 0.0)) {
        return Err(invalid(format!("grid values must be positive, got {bad}")));
    }
    Ok(())
}

/// `G(α) = Σ(c_i / (σ_i² + α²))² / (Σ 1 / (σ_i² + α²))²`.
pub fn gcv_tikhonov_value(sigma: &DVector<f64>, coeffs: &DVector<f64>, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let (mut num, mut den) = (0.0, 0.0);
    for (s, c) in sigma.iter().zip(coeffs.iter()) {
        let d = 1.0 / (s * s + a2);
        num += (c * d).powi(2);
        den += d;
    }
    num / (den * den)
}

/// Picks the grid α minimizing the Tikhonov GCV function; ties go to the earlier grid point.
pub fn gcv_tikhonov(svd: &SvdTriple, b: &DVector<f64>, alpha_grid: &[f64]) -> Result<SelectionResult> {
    check_grid(alpha_grid)?;
    let c = svd.left_coefficients(b)?;
    let sigma = svd.singular_values();
    let curve: Vec<(f64, f64)> = alpha_grid
        .iter()
        .map(|&a| (a, gcv_tikhonov_value(sigma, &c, a)))
        .collect();
    let index = argmin_first(curve.iter().map(|p| p.1));
    Ok(SelectionResult {
        method: SelectionMethod::Gcv,
        parameter: SelectedParameter::Alpha(curve[index].0),
        index: Some(index),
        curve: Curve::Gcv(curve),
        achieved_residual: None,
    })
}

/// TSVD GCV over `k = 1..N−1`, `G(k) = Σ_{i>k} c_i² / (N − k)²`, ties toward smaller `k`.
pub fn gcv_tsvd(svd: &SvdTriple, b: &DVector<f64>) -> Result<SelectionResult> {
    let n = svd.len();
    if n < 2 {
        return Err(invalid("TSVD GCV needs N >= 2"));
    }
    let c = svd.left_coefficients(b)?;
    // suffix[k] = Σ_{i >= k} c_i² (0-based), so the tail after the first k terms is suffix[k]
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + c[i] * c[i];
    }
    let curve: Vec<(f64, f64)> = (1..n)
        .map(|k| (k as f64, suffix[k] / ((n - k) as f64).powi(2)))
        .collect();
    let index = argmin_first(curve.iter().map(|p| p.1));
    Ok(SelectionResult {
        method: SelectionMethod::Gcv,
        parameter: SelectedParameter::Truncation(index + 1),
        index: Some(index),
        curve: Curve::Gcv(curve),
        achieved_residual: None,
    })
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Signed discrete Menger curvature at `p2`.
fn menger(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> f64 {
    let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let cross = (p2.0 - p1.0) * (p3.1 - p2.1) - (p2.1 - p1.1) * (p3.0 - p2.0);
    let denom = d(p1, p2) * d(p2, p3) * d(p1, p3);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Curvatures of a polyline and the index of its corner.
///
/// The corner is the interior point of maximum signed curvature (the convex
/// turn of an L-curve traversed in ascending α); ties go to the later point.
pub fn lcurve_corner(points: &[(f64, f64)]) -> Result<(usize, Vec<f64>)> {
    if points.len() < 3 {
        return Err(DeblurError::NoCorner);
    }
    let mut curvature = vec![0.0; points.len()];
    for i in 1..points.len() - 1 {
        curvature[i] = menger(points[i - 1], points[i], points[i + 1]);
    }
    let mut best = None;
    for (i, &k) in curvature.iter().enumerate().take(points.len() - 1).skip(1) {
        if k.is_finite() && best.is_none_or(|(_, bk)| k >= bk) {
            best = Some((i, k));
        }
    }
    match best {
        Some((i, k)) if k > 1e-8 => Ok((i, curvature)),
        _ => Err(DeblurError::NoCorner),
    }
}

/// L-curve corner over an ascending α grid with at least 5 points.
pub fn lcurve(svd: &SvdTriple, b: &DVector<f64>, alpha_grid: &[f64]) -> Result<SelectionResult> {
    check_grid(alpha_grid)?;
    if alpha_grid.len() < 5 {
        return Err(invalid("L-curve needs at least 5 grid points"));
    }
    if alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("L-curve grid must be strictly ascending"));
    }
    let c = svd.left_coefficients(b)?;
    let sigma = svd.singular_values();
    let points: Vec<(f64, f64)> = alpha_grid
        .iter()
        .map(|&alpha| {
            let (r, x) = tikhonov_norms(sigma, &c, alpha);
            (r.log10(), x.log10())
        })
        .collect();
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(DeblurError::NoCorner);
    }
    let (index, curvature) = lcurve_corner(&points)?;
    let curve = alpha_grid
        .iter()
        .zip(points.iter().zip(curvature))
        .map(|(&alpha, (&(lr, ls), k))| LcurvePoint {
            alpha,
            log_residual: lr,
            log_solution: ls,
            curvature: k,
        })
        .collect();
    Ok(SelectionResult {
        method: SelectionMethod::Lcurve,
        parameter: SelectedParameter::Alpha(alpha_grid[index]),
        index: Some(index),
        curve: Curve::Lcurve(curve),
        achieved_residual: None,
    })
}

/// Tikhonov `(‖b − A x_α‖₂, ‖x_α‖₂)` from spectral coefficients.
pub fn tikhonov_norms(sigma: &DVector<f64>, c: &DVector<f64>, alpha: f64) -> (f64, f64) {
    let a2 = alpha * alpha;
    let (mut r, mut x) = (0.0, 0.0);
    for (s, ci) in sigma.iter().zip(c.iter()) {
        let d = s * s + a2;
        r += (a2 / d * ci).powi(2);
        x += (s / d * ci).powi(2);
    }
    (r.sqrt(), x.sqrt())
}

/// Default safety factor for the discrepancy principle.
pub const DEFAULT_DISCREPANCY_SAFETY: f64 = 1.0;

/// Finds α with `‖b − A x_α‖₂ = safety · noise_norm` by bisection in log α.
///
/// The Tikhonov residual is monotone increasing in α, running from the
/// null-space residual (α → 0) to `‖b‖₂` (α → ∞).
pub fn discrepancy(
    svd: &SvdTriple,
    b: &DVector<f64>,
    noise_norm: f64,
    safety: f64,
) -> Result<SelectionResult> {
    if !(noise_norm >= 0.0) {
        return Err(invalid(format!("noise norm must be nonnegative, got {noise_norm}")));
    }
    if !(safety >= 1.0) {
        return Err(invalid(format!("safety factor must be >= 1, got {safety}")));
    }
    let c = svd.left_coefficients(b)?;
    let sigma = svd.singular_values();
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    if !(s1 > 0.0) {
        return Err(invalid("operator has no positive singular value"));
    }
    let floor: f64 = sigma
        .iter()
        .zip(c.iter())
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, c)| c * c)
        .sum::<f64>()
        .sqrt();
    let bnorm = c.norm();
    let target = safety * noise_norm;
    let slack = 1e-12 * bnorm.max(f64::MIN_POSITIVE);
    if target < floor - slack || target > bnorm + slack {
        return Err(DeblurError::InfeasibleTarget {
            target,
            min: floor,
            max: bnorm,
        });
    }
    let residual = |alpha: f64| tikhonov_norms(sigma, &c, alpha).0;
    let (mut lo, mut hi) = ((s1 * 1e-12).ln(), (s1 * 1e12).ln());
    let mut trace = Vec::new();
    let r_lo = residual(lo.exp());
    if target <= r_lo {
        trace.push((lo.exp(), r_lo));
        return Ok(SelectionResult {
            method: SelectionMethod::Discrepancy,
            parameter: SelectedParameter::Alpha(lo.exp()),
            index: None,
            curve: Curve::Discrepancy(trace),
            achieved_residual: Some(r_lo),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid.exp());
        trace.push((mid.exp(), r));
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    Ok(SelectionResult {
        method: SelectionMethod::Discrepancy,
        parameter: SelectedParameter::Alpha(alpha),
        index: None,
        curve: Curve::Discrepancy(trace),
        achieved_residual: Some(residual(alpha)),
    })
}

/// Monte-Carlo estimate `λ̂ = 2 E‖Aᵀ e‖₂` over `trials` noise draws.
pub fn estimate_lambda<Op, S>(op: &Op, mut sampler: S, trials: usize) -> Result<f64>
where
    Op: LinearOperator + ?Sized,
    S: FnMut() -> DVector<f64>,
{
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let mut total = 0.0;
    for _ in 0..trials {
        let e = sampler();
        if e.len() != op.dim() {
            return Err(invalid(format!("noise draw has length {}, expected {}", e.len(), op.dim())));
        }
        total += 2.0 * op.apply_transpose_vec(&e).norm();
    }
    Ok(total / trials as f64)
}

/// Seeded white Gaussian sampler of length `n` and per-component std `eta`.
pub fn gaussian_sampler(n: usize, eta: f64, seed: u64) -> impl FnMut() -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move || DVector::from_fn(n, |_, _| eta * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
}

/// Filter factors for a selected parameter against `svd`.
pub fn selected_filter_factors(svd: &SvdTriple, p: SelectedParameter) -> Result<DVector<f64>> {
    filter_factors(&p.filter(), svd.singular_values())
}
