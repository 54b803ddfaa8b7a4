use nalgebra::DVector;
use serde::Serialize;

use super::regularizer::RegularizerSpec;
use crate::error::{invalid, DeblurError, Result};
use crate::filters::{filtered_reconstruct, FilterSpec};
use crate::imagegrid::{unvectorize, vectorize};
use crate::operator::LinearOperator;
use crate::spectral::SvdTriple;

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    Zero,
    /// Start from the observation itself.
    Observation,
    Provided(DVector<f64>),
}

impl Initialization {
    /// `A⁺ b` through the singular value expansion.
    pub fn pseudo_inverse(svd: &SvdTriple, b: &DVector<f64>) -> Result<Self> {
        let phi = vec![1.0; svd.len()];
        Self::filtered(svd, b, &FilterSpec::Custom { phi })
    }

    pub fn filtered(svd: &SvdTriple, b: &DVector<f64>, spec: &FilterSpec) -> Result<Self> {
        Ok(Initialization::Provided(filtered_reconstruct(svd, b, spec)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    /// Fixed step `τ`.
    pub step: f64,
    /// Weight `λ` of the regularizer.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `|F_k − F_{k−1}| ≤ rel_tol · |F_{k−1}|`; zero disables this test.
    pub rel_tol: f64,
    /// Stop once the gradient norm falls to this value.
    pub grad_tol: f64,
    pub init: Initialization,
}

impl GdConfig {
    pub fn new(step: f64, lambda: f64) -> Self {
        GdConfig {
            step,
            lambda,
            max_iters: 1500,
            rel_tol: 1e-6,
            grad_tol: 0.0,
            init: Initialization::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub residual_norm: f64,
    pub reg_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub x: DVector<f64>,
    /// Entry 0 describes the starting point.
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

/// Gradient descent on `F(x) = ‖A x − b‖² + λ R(x)`.
///
/// Fails with [`DeblurError::Diverged`] once `F` exceeds ten times its initial value.
pub fn gradient_reconstruct(
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    shape: (usize, usize),
    reg: &RegularizerSpec,
    cfg: &GdConfig,
) -> Result<GdOutcome> {
    let (m, n) = shape;
    let size = op.dim();
    if m * n != size || b.len() != size {
        return Err(invalid(format!(
            "operator acts on {size} entries but image is {m}x{n} and data has {}",
            b.len()
        )));
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(invalid(format!("step must be positive, got {}", cfg.step)));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(invalid(format!("lambda must be nonnegative, got {}", cfg.lambda)));
    }
    if cfg.lambda > 0.0 && !reg.is_differentiable() {
        return Err(DeblurError::EvaluationOnly);
    }
    reg.validate()?;

    let mut x = match &cfg.init {
        Initialization::Zero => DVector::zeros(size),
        Initialization::Observation => b.clone(),
        Initialization::Provided(v) => {
            if v.len() != size {
                return Err(invalid("initial guess has the wrong length"));
            }
            v.clone()
        }
    };

    let evaluate = |x: &DVector<f64>| -> Result<(f64, f64, f64, DVector<f64>)> {
        let r = op.apply_vec(x) - b;
        let mut grad = op.apply_transpose_vec(&r) * 2.0;
        let mut reg_value = 0.0;
        if cfg.lambda > 0.0 {
            let (v, g) = reg.value_and_gradient(&unvectorize(x, m, n)?)?;
            reg_value = v;
            grad += vectorize(&g) * cfg.lambda;
        }
        let rn = r.norm();
        Ok((rn * rn + cfg.lambda * reg_value, rn, reg_value, grad))
    };

    let (f0, rn, rv, mut grad) = evaluate(&x)?;
    if !f0.is_finite() {
        return Err(DeblurError::NonFinite(0));
    }
    let mut trace = vec![TraceEntry { iteration: 0, objective: f0, residual_norm: rn, reg_value: rv }];
    let mut previous = f0;
    let mut converged = grad.norm() <= cfg.grad_tol;

    let mut iteration = 0;
    while !converged && iteration < cfg.max_iters {
        iteration += 1;
        x.axpy(-cfg.step, &grad, 1.0);
        let (f, rn, rv, g) = evaluate(&x)?;
        if !f.is_finite() {
            return Err(DeblurError::NonFinite(iteration));
        }
        if f > 10.0 * f0 && f > 0.0 {
            return Err(DeblurError::Diverged { initial: f0, current: f });
        }
        trace.push(TraceEntry { iteration, objective: f, residual_norm: rn, reg_value: rv });
        grad = g;
        converged = (cfg.rel_tol > 0.0 && (f - previous).abs() <= cfg.rel_tol * previous.abs())
            || grad.norm() <= cfg.grad_tol;
        previous = f;
    }

    Ok(GdOutcome { x, trace, converged })
}
