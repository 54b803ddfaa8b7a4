use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DeblurError, Result};

/// `Σ |v_i|^p` for `p ∈ [1, 2]`.
pub fn p_norm_pow(v: &[f64], p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(invalid(format!("p must lie in [1, 2], got {p}")));
    }
    Ok(v.iter().map(|x| x.abs().powf(p)).sum())
}

/// Regularization matrix `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffOperator {
    Identity,
    /// Forward differences along columns and rows, zero on the last row/column.
    FirstDifference,
}

impl DiffOperator {
    /// `D x` as a list of matrices (one for identity, two for differences).
    pub(crate) fn apply(self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        match self {
            DiffOperator::Identity => vec![x.clone()],
            DiffOperator::FirstDifference => {
                let (dv, dh) = forward_differences(x);
                vec![dv, dh]
            }
        }
    }

    /// `Dᵀ g` for `g` shaped like [`DiffOperator::apply`]'s output.
    pub(crate) fn apply_transpose(self, g: &[DMatrix<f64>]) -> DMatrix<f64> {
        match self {
            DiffOperator::Identity => g[0].clone(),
            DiffOperator::FirstDifference => difference_transpose(&g[0], &g[1]),
        }
    }

    /// Upper bound on `‖D‖₂²`.
    pub(crate) fn norm_bound_sq(self) -> f64 {
        match self {
            DiffOperator::Identity => 1.0,
            DiffOperator::FirstDifference => 8.0,
        }
    }
}

/// Vertical and horizontal forward differences.
pub(crate) fn forward_differences(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = x.shape();
    let dv = DMatrix::from_fn(m, n, |i, j| if i + 1 < m { x[(i + 1, j)] - x[(i, j)] } else { 0.0 });
    let dh = DMatrix::from_fn(m, n, |i, j| if j + 1 < n { x[(i, j + 1)] - x[(i, j)] } else { 0.0 });
    (dv, dh)
}

/// Adjoint of [`forward_differences`].
pub(crate) fn difference_transpose(gv: &DMatrix<f64>, gh: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = gv.shape();
    let mut out = DMatrix::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            if i + 1 < m {
                out[(i + 1, j)] += gv[(i, j)];
                out[(i, j)] -= gv[(i, j)];
            }
            if j + 1 < n {
                out[(i, j + 1)] += gh[(i, j)];
                out[(i, j)] -= gh[(i, j)];
            }
        }
    }
    out
}

/// Smoothing inside the edge magnitude `√(∂₁x² + ∂₂x² + ε_f²)`.
pub const EDGE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegularizerSpec {
    /// `‖D x‖₂²`.
    SmoothNorm { d: DiffOperator },
    /// `Σ (v_i² + ε²)^{p/2}` with `v = D x`, a smooth stand-in for `‖D x‖_p^p`.
    PNorm { d: DiffOperator, p: f64, eps: f64 },
    /// `Σ (f_i(x) + ε)^q` with `f` the edge magnitude.
    ///
    /// `strength` and `noise_variance` are the prior strength `k` and `σ²`;
    /// solvers weight this term by `k σ²`.
    SparseEdge {
        q: f64,
        eps: f64,
        strength: f64,
        noise_variance: f64,
    },
    /// Number of entries of `D x` above `threshold` in magnitude. Evaluation only.
    ZeroCount { d: DiffOperator, threshold: f64 },
}

impl RegularizerSpec {
    /// Sparse-edge prior with `q = 0.7`, `ε = 1e−3`, `k = 1`.
    pub fn sparse_edge(noise_variance: f64) -> Self {
        RegularizerSpec::SparseEdge {
            q: 0.7,
            eps: 1e-3,
            strength: 1.0,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerSpec::SmoothNorm { .. } => Ok(()),
            RegularizerSpec::PNorm { p, eps, .. } => {
                if !(1.0..2.0).contains(&p) {
                    return Err(invalid(format!("p must lie in [1, 2), got {p}")));
                }
                if !(eps > 0.0) {
                    return Err(invalid("p-norm smoothing must be positive"));
                }
                Ok(())
            }
            RegularizerSpec::SparseEdge {
                q,
                eps,
                strength,
                noise_variance,
            } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(format!("q must lie in (0, 1], got {q}")));
                }
                if !(eps > 0.0) {
                    return Err(invalid("sparse-edge epsilon must be positive"));
                }
                if !(strength >= 0.0 && noise_variance >= 0.0) {
                    return Err(invalid("prior strength and noise variance must be nonnegative"));
                }
                Ok(())
            }
            RegularizerSpec::ZeroCount { threshold, .. } => {
                if !(threshold >= 0.0) {
                    return Err(invalid("zero-count threshold must be nonnegative"));
                }
                Ok(())
            }
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, RegularizerSpec::ZeroCount { .. })
    }

    pub fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            RegularizerSpec::SmoothNorm { d } => d.apply(x).iter().map(|v| v.norm_squared()).sum(),
            RegularizerSpec::PNorm { d, p, eps } => d
                .apply(x)
                .iter()
                .flat_map(|v| v.iter().map(|t| (t * t + eps * eps).powf(0.5 * p)).collect::<Vec<_>>())
                .sum(),
            RegularizerSpec::SparseEdge { q, eps, .. } => {
                edge_magnitude(x).iter().map(|f| (f + eps).powf(q)).sum()
            }
            RegularizerSpec::ZeroCount { d, threshold } => d
                .apply(x)
                .iter()
                .map(|v| v.iter().filter(|t| t.abs() > threshold).count())
                .sum::<usize>() as f64,
        })
    }

    pub fn value_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.validate()?;
        match *self {
            RegularizerSpec::SmoothNorm { d } => {
                let v = d.apply(x);
                let value = v.iter().map(|t| t.norm_squared()).sum();
                let g: Vec<_> = v.iter().map(|t| t * 2.0).collect();
                Ok((value, d.apply_transpose(&g)))
            }
            RegularizerSpec::PNorm { d, p, eps } => {
                let v = d.apply(x);
                let mut value = 0.0;
                let g: Vec<_> = v
                    .iter()
                    .map(|t| {
                        t.map(|s| {
                            let base = s * s + eps * eps;
                            value += base.powf(0.5 * p);
                            p * s * base.powf(0.5 * p - 1.0)
                        })
                    })
                    .collect();
                Ok((value, d.apply_transpose(&g)))
            }
            RegularizerSpec::SparseEdge { q, eps, .. } => {
                let (dv, dh) = forward_differences(x);
                let f = dv.zip_map(&dh, |a, b| (a * a + b * b + EDGE_EPSILON * EDGE_EPSILON).sqrt());
                let value = f.iter().map(|fi| (fi + eps).powf(q)).sum();
                let w = f.map(|fi| q * (fi + eps).powf(q - 1.0) / fi);
                let gv = dv.component_mul(&w);
                let gh = dh.component_mul(&w);
                Ok((value, difference_transpose(&gv, &gh)))
            }
            RegularizerSpec::ZeroCount { .. } => Err(DeblurError::EvaluationOnly),
        }
    }

    /// Lipschitz bound of the gradient, where one is finite and cheap.
    pub fn gradient_lipschitz(&self) -> Option<f64> {
        match *self {
            RegularizerSpec::SmoothNorm { d } => Some(2.0 * d.norm_bound_sq()),
            RegularizerSpec::PNorm { d, p, eps } => Some(p * eps.powf(p - 2.0) * d.norm_bound_sq()),
            _ => None,
        }
    }
}

/// `f_i(x) = √(∂₁x² + ∂₂x² + ε_f²)`.
pub(crate) fn edge_magnitude(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (dv, dh) = forward_differences(x);
    dv.zip_map(&dh, |a, b| (a * a + b * b + EDGE_EPSILON * EDGE_EPSILON).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smooth_identity_value_and_gradient() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let (v, g) = RegularizerSpec::SmoothNorm { d: DiffOperator::Identity }
            .value_and_gradient(&x)
            .unwrap();
        assert!((v - x.norm_squared()).abs() < 1e-15);
        assert_eq!(g, &x * 2.0);
    }

    #[test]
    fn sparse_edge_on_constant_image() {
        let x = DMatrix::from_element(5, 6, 0.3);
        let spec = RegularizerSpec::sparse_edge(1e-4);
        let v = spec.value(&x).unwrap();
        let expected = 30.0 * 1e-3f64.powf(0.7);
        assert!((v - expected).abs() < 1e-4 * expected);
    }

    #[test]
    fn difference_transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(5, 7, |_, _| rng.random::<f64>());
        let gv = DMatrix::from_fn(5, 7, |_, _| rng.random::<f64>());
        let gh = DMatrix::from_fn(5, 7, |_, _| rng.random::<f64>());
        let (dv, dh) = forward_differences(&x);
        let lhs = dv.dot(&gv) + dh.dot(&gh);
        let rhs = x.dot(&difference_transpose(&gv, &gh));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_count_is_evaluation_only() {
        let spec = RegularizerSpec::ZeroCount { d: DiffOperator::FirstDifference, threshold: 0.0 };
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(spec.value(&x).unwrap(), 1.0);
        assert!(matches!(spec.value_and_gradient(&x), Err(DeblurError::EvaluationOnly)));
        assert!(!spec.is_differentiable());
    }

    #[test]
    fn sparser_edges_score_lower() {
        // both images change by 1 from left to right: one sharp step vs a ramp
        let step = DMatrix::from_fn(4, 8, |_, j| if j < 4 { 0.0 } else { 1.0 });
        let ramp = DMatrix::from_fn(4, 8, |_, j| j as f64 / 7.0);
        let spec = RegularizerSpec::sparse_edge(0.0);
        assert!(spec.value(&step).unwrap() < spec.value(&ramp).unwrap());
    }

    #[test]
    fn parameter_validation() {
        let bad = [
            RegularizerSpec::PNorm { d: DiffOperator::Identity, p: 2.0, eps: 1e-3 },
            RegularizerSpec::PNorm { d: DiffOperator::Identity, p: 1.5, eps: 0.0 },
            RegularizerSpec::SparseEdge { q: 1.2, eps: 1e-3, strength: 1.0, noise_variance: 0.0 },
            RegularizerSpec::SparseEdge { q: 0.5, eps: -1.0, strength: 1.0, noise_variance: 0.0 },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn p_norm_rejects_out_of_range() {
        assert!(p_norm_pow(&[1.0], 0.5).is_err());
        assert!(p_norm_pow(&[1.0], 2.5).is_err());
        assert_eq!(p_norm_pow(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 10.0);
        assert_eq!(p_norm_pow(&[1.0, 2.0, 3.0, 4.0], 2.0).unwrap(), 30.0);
    }

    fn central_difference(spec: &RegularizerSpec, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for idx in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[idx] += h;
            minus[idx] -= h;
            out[idx] = (spec.value(&plus).unwrap() - spec.value(&minus).unwrap()) / (2.0 * h);
        }
        out
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn gradients_match_central_differences(seed in 0u64..10_000, which in 0usize..4) {
            let specs = [
                RegularizerSpec::SmoothNorm { d: DiffOperator::Identity },
                RegularizerSpec::SmoothNorm { d: DiffOperator::FirstDifference },
                RegularizerSpec::PNorm { d: DiffOperator::FirstDifference, p: 1.3, eps: 1e-2 },
                RegularizerSpec::sparse_edge(1e-3),
            ];
            let spec = &specs[which];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(5, 6, |_, _| rng.random::<f64>());
            let (_, g) = spec.value_and_gradient(&x).unwrap();
            let fd = central_difference(spec, &x, 1e-6);
            let scale = fd.amax();
            for (a, b) in g.iter().zip(fd.iter()) {
                proptest::prop_assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-2 * scale), "{a} vs {b}");
            }
        }
    }
}
