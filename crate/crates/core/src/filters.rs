//! Spectral filter factors, filtered reconstruction and the error decomposition.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DeblurError, Result};
use crate::spectral::SvdTriple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    /// Keep the first `k` components unchanged, drop the rest.
    Tsvd { k: usize },
    /// `φ_i = σ_i² / (σ_i² + α²)`.
    Tikhonov { alpha: f64 },
    Custom { phi: Vec<f64> },
}

/// Filter factors for descending singular values `sigma`.
///
/// TSVD `k` is capped at the number of nonzero singular values.
pub fn filter_factors(spec: &FilterSpec, sigma: &DVector<f64>) -> Result<DVector<f64>> {
    let n = sigma.len();
    match spec {
        FilterSpec::Tsvd { k } => {
            if *k == 0 || *k > n {
                return Err(invalid(format!("TSVD truncation k = {k} outside [1, {n}]")));
            }
            let nonzero = sigma.iter().filter(|s| **s > 0.0).count();
            let k = (*k).min(nonzero);
            Ok(DVector::from_fn(n, |i, _| if i < k { 1.0 } else { 0.0 }))
        }
        FilterSpec::Tikhonov { alpha } => {
            if !(*alpha > 0.0) {
                return Err(invalid(format!("Tikhonov alpha must be positive, got {alpha}")));
            }
            let a2 = alpha * alpha;
            Ok(sigma.map(|s| s * s / (s * s + a2)))
        }
        FilterSpec::Custom { phi } => {
            if phi.len() != n {
                return Err(invalid(format!("custom filter has {} factors, expected {n}", phi.len())));
            }
            if let Some(bad) = phi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(invalid(format!("custom filter factor {bad} outside [0, 1]")));
            }
            Ok(DVector::from_column_slice(phi))
        }
    }
}

/// `φ_i / σ_i`, rejecting a zero singular value under a nonzero factor.
fn inverse_weights(phi: &DVector<f64>, sigma: &DVector<f64>) -> Result<DVector<f64>> {
    let mut w = DVector::zeros(phi.len());
    for i in 0..phi.len() {
        if phi[i] == 0.0 {
            continue;
        }
        if sigma[i] == 0.0 {
            return Err(DeblurError::ZeroSingularValue(i));
        }
        w[i] = phi[i] / sigma[i];
    }
    Ok(w)
}

/// `x = Σ φ_i (u_iᵀ b / σ_i) v_i`.
pub fn filtered_reconstruct(svd: &SvdTriple, b: &DVector<f64>, spec: &FilterSpec) -> Result<DVector<f64>> {
    let phi = filter_factors(spec, svd.singular_values())?;
    let c = svd.left_coefficients(b)?;
    let w = inverse_weights(&phi, svd.singular_values())?;
    svd.synthesize_right(&c.component_mul(&w))
}

/// `(‖b − A x‖₂, ‖x‖₂)` for the filtered solution, from spectral sums.
pub fn residual_and_solution_norms(
    svd: &SvdTriple,
    b: &DVector<f64>,
    spec: &FilterSpec,
) -> Result<(f64, f64)> {
    let phi = filter_factors(spec, svd.singular_values())?;
    let c = svd.left_coefficients(b)?;
    let w = inverse_weights(&phi, svd.singular_values())?;
    Ok(spectral_norms(&phi, &w, &c))
}

pub(crate) fn spectral_norms(phi: &DVector<f64>, inv_w: &DVector<f64>, c: &DVector<f64>) -> (f64, f64) {
    let residual: f64 = phi.iter().zip(c.iter()).map(|(p, c)| ((1.0 - p) * c).powi(2)).sum();
    let solution: f64 = inv_w.iter().zip(c.iter()).map(|(w, c)| (w * c).powi(2)).sum();
    (residual.sqrt(), solution.sqrt())
}

/// The two components of `x_true − x_filtered`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSplit {
    /// `(I − V Φ Vᵀ) x_true`.
    pub regularization_error: DVector<f64>,
    /// `V Φ Σ⁻¹ Uᵀ e`.
    pub perturbation_error: DVector<f64>,
    pub regularization_norm: f64,
    pub perturbation_norm: f64,
    /// `sqrt(Σ((1 − φ_i) u_iᵀ b_exact / σ_i)²)`.
    pub regularization_norm_closed: f64,
    /// `sqrt(Σ(φ_i σ_i⁻¹ u_iᵀ e)²)`.
    pub perturbation_norm_closed: f64,
}

/// Splits the filtered reconstruction error for `b = A x_true + e`.
pub fn error_decomposition(
    svd: &SvdTriple,
    spec: &FilterSpec,
    x_true: &DVector<f64>,
    e: &DVector<f64>,
) -> Result<ErrorSplit> {
    let sigma = svd.singular_values();
    let phi = filter_factors(spec, sigma)?;
    let w = inverse_weights(&phi, sigma)?;

    let vx = svd.right_coefficients(x_true)?;
    let regularization_error = x_true - svd.synthesize_right(&phi.component_mul(&vx))?;
    let ue = svd.left_coefficients(e)?;
    let perturbation_error = svd.synthesize_right(&w.component_mul(&ue))?;

    let b_exact = svd.apply(x_true)?;
    let ub = svd.left_coefficients(&b_exact)?;
    let mut reg_closed = 0.0;
    for i in 0..sigma.len() {
        if phi[i] == 1.0 {
            continue;
        }
        if sigma[i] == 0.0 {
            // the component is invisible in b_exact, so the closed form cannot see it
            continue;
        }
        reg_closed += ((1.0 - phi[i]) * ub[i] / sigma[i]).powi(2);
    }
    let pert_closed: f64 = w.iter().zip(ue.iter()).map(|(w, u)| (w * u).powi(2)).sum();

    Ok(ErrorSplit {
        regularization_norm: regularization_error.norm(),
        perturbation_norm: perturbation_error.norm(),
        regularization_error,
        perturbation_error,
        regularization_norm_closed: reg_closed.sqrt(),
        perturbation_norm_closed: pert_closed.sqrt(),
    })
}
