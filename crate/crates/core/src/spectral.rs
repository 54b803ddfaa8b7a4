//! Singular value decompositions of the forward operator and the Picard diagnostics built on them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, shape_err, Result};
use crate::imagegrid::{unvectorize, vectorize};
use crate::operator::{condition_number, DenseOperator, SeparableBlur, DENSE_CAP};

/// SVD of one small factor, sorted by descending singular value.
#[derive(Debug, Clone)]
pub struct FactorSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl FactorSvd {
    fn of(a: &DMatrix<f64>) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("left vectors requested");
        let v = svd.v_t.expect("right vectors requested").transpose();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
        let n = order.len();
        let sigma = DVector::from_fn(n, |t, _| svd.singular_values[order[t]]);
        let u = DMatrix::from_fn(u.nrows(), n, |r, t| u[(r, order[t])]);
        let v = DMatrix::from_fn(v.nrows(), n, |r, t| v[(r, order[t])]);
        Self { u, sigma, v }
    }
}

#[derive(Debug, Clone)]
enum Structure {
    Dense {
        u: DMatrix<f64>,
        v: DMatrix<f64>,
    },
    /// `A = A_r ⊗ A_c`. `order[t] = (j, i)` pairs row-factor index `j` with
    /// column-factor index `i`; the product vector is `vec(u_c,i u_r,jᵀ)`.
    Kronecker {
        row: FactorSvd,
        col: FactorSvd,
        order: Vec<(usize, usize)>,
    },
}

/// `A = U Σ Vᵀ` with `σ₁ ≥ … ≥ σ_N ≥ 0`.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    sigma: DVector<f64>,
    height: usize,
    width: usize,
    structure: Structure,
}

/// Dense SVD of an explicit operator.
pub fn svd_dense(a: &DenseOperator) -> Result<SvdTriple> {
    let (m, n) = a.shape();
    if m * n > DENSE_CAP {
        return Err(crate::DeblurError::DenseCapExceeded {
            n: m * n,
            cap: DENSE_CAP,
        });
    }
    let f = FactorSvd::of(a.matrix());
    Ok(SvdTriple {
        sigma: f.sigma,
        height: m,
        width: n,
        structure: Structure::Dense { u: f.u, v: f.v },
    })
}

/// SVD of `A_r ⊗ A_c` from the two small factor SVDs.
///
/// Product singular values are sorted descending; ties keep the
/// lexicographic `(row index, column index)` order.
pub fn svd_separable(blur: &SeparableBlur) -> SvdTriple {
    let row = FactorSvd::of(blur.row_matrix());
    let col = FactorSvd::of(blur.col_matrix());
    let (m, n) = blur.shape();
    let mut order: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..m).map(move |i| (j, i))).collect();
    let value = |&(j, i): &(usize, usize)| row.sigma[j] * col.sigma[i];
    // stable sort keeps the lexicographic enumeration among ties
    order.sort_by(|a, b| value(b).total_cmp(&value(a)));
    let sigma = DVector::from_iterator(order.len(), order.iter().map(value));
    SvdTriple {
        sigma,
        height: m,
        width: n,
        structure: Structure::Kronecker { row, col, order },
    }
}

impl SvdTriple {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Image shape `(m, n)` the operator acts on.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_kronecker(&self) -> bool {
        matches!(self.structure, Structure::Kronecker { .. })
    }

    /// Factor SVDs `(row, col)` for Kronecker structure.
    pub fn factors(&self) -> Option<(&FactorSvd, &FactorSvd)> {
        match &self.structure {
            Structure::Kronecker { row, col, .. } => Some((row, col)),
            Structure::Dense { .. } => None,
        }
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(self.sigma.as_slice())
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.len() {
            return Err(shape_err((self.len(), 1), (v.len(), 1)));
        }
        Ok(())
    }

    /// `u_i`, materialized on demand.
    pub fn u_column(&self, i: usize) -> DVector<f64> {
        match &self.structure {
            Structure::Dense { u, .. } => u.column(i).into_owned(),
            Structure::Kronecker { row, col, order } => {
                let (j, ic) = order[i];
                vectorize(&(col.u.column(ic) * row.u.column(j).transpose()))
            }
        }
    }

    /// `v_i`, materialized on demand.
    pub fn v_column(&self, i: usize) -> DVector<f64> {
        match &self.structure {
            Structure::Dense { v, .. } => v.column(i).into_owned(),
            Structure::Kronecker { row, col, order } => {
                let (j, ic) = order[i];
                vectorize(&(col.v.column(ic) * row.v.column(j).transpose()))
            }
        }
    }

    /// `Uᵀ b` in sorted index order.
    pub fn left_coefficients(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(b)?;
        Ok(match &self.structure {
            Structure::Dense { u, .. } => u.tr_mul(b),
            Structure::Kronecker { row, col, order } => {
                let bm = unvectorize(b, self.height, self.width)?;
                let c = col.u.tr_mul(&bm) * &row.u;
                DVector::from_iterator(order.len(), order.iter().map(|&(j, i)| c[(i, j)]))
            }
        })
    }

    /// `Vᵀ x` in sorted index order.
    pub fn right_coefficients(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        Ok(match &self.structure {
            Structure::Dense { v, .. } => v.tr_mul(x),
            Structure::Kronecker { row, col, order } => {
                let xm = unvectorize(x, self.height, self.width)?;
                let c = col.v.tr_mul(&xm) * &row.v;
                DVector::from_iterator(order.len(), order.iter().map(|&(j, i)| c[(i, j)]))
            }
        })
    }

    /// `Σ w_i v_i`.
    pub fn synthesize_right(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(w)?;
        Ok(match &self.structure {
            Structure::Dense { v, .. } => v * w,
            Structure::Kronecker { row, col, order } => {
                let wm = scatter(w, order, self.height, self.width);
                vectorize(&(&col.v * wm * row.v.transpose()))
            }
        })
    }

    /// `Σ w_i u_i`.
    pub fn synthesize_left(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(w)?;
        Ok(match &self.structure {
            Structure::Dense { u, .. } => u * w,
            Structure::Kronecker { row, col, order } => {
                let wm = scatter(w, order, self.height, self.width);
                vectorize(&(&col.u * wm * row.u.transpose()))
            }
        })
    }

    /// `U Σ Vᵀ x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.right_coefficients(x)?;
        self.synthesize_left(&c.component_mul(&self.sigma))
    }

    /// `V Σ Uᵀ y`.
    pub fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.left_coefficients(y)?;
        self.synthesize_right(&c.component_mul(&self.sigma))
    }
}

fn scatter(w: &DVector<f64>, order: &[(usize, usize)], m: usize, n: usize) -> DMatrix<f64> {
    let mut wm = DMatrix::zeros(m, n);
    for (t, &(j, i)) in order.iter().enumerate() {
        wm[(i, j)] = w[t];
    }
    wm
}

/// Spectral coefficients `c_i = u_iᵀ b`.
pub fn spectral_coefficients(svd: &SvdTriple, b: &DVector<f64>) -> Result<DVector<f64>> {
    svd.left_coefficients(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardEntry {
    pub index: usize,
    pub sigma: f64,
    pub coeff: f64,
    pub abs_coeff: f64,
    /// `|c_i| / σ_i`, `+∞` where `σ_i = 0`.
    pub ratio: f64,
}

/// Per-index `(σ_i, |u_iᵀb|, |u_iᵀb|/σ_i)`, sorted by descending `σ_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardSeries {
    pub entries: Vec<PicardEntry>,
}

pub fn picard_series(svd: &SvdTriple, b: &DVector<f64>) -> Result<PicardSeries> {
    let c = svd.left_coefficients(b)?;
    let entries = svd
        .singular_values()
        .iter()
        .zip(c.iter())
        .enumerate()
        .map(|(index, (&sigma, &coeff))| PicardEntry {
            index,
            sigma,
            coeff,
            abs_coeff: coeff.abs(),
            ratio: if sigma == 0.0 {
                f64::INFINITY
            } else {
                coeff.abs() / sigma
            },
        })
        .collect();
    Ok(PicardSeries { entries })
}

impl PicardSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Discrete Picard check on the pre-plateau range.
    ///
    /// The moving average (window [`PICARD_WINDOW`]) of `|c_i|/σ_i` must be
    /// non-increasing in at least 80% of consecutive steps over indices
    /// `0..plateau_index`.
    pub fn picard_satisfied(&self, plateau_index: usize) -> bool {
        let end = plateau_index.min(self.len());
        let ratios: Vec<f64> = self.entries[..end].iter().map(|e| e.ratio).collect();
        if ratios.iter().any(|r| !r.is_finite()) {
            return false;
        }
        if ratios.len() < PICARD_WINDOW + 1 {
            // too short to judge a trend: accept a non-increasing endpoint pair
            return ratios.first().zip(ratios.last()).is_none_or(|(a, b)| b <= a);
        }
        let avg = moving_average(&ratios, PICARD_WINDOW);
        let steps = avg.len() - 1;
        let down = avg.windows(2).filter(|w| w[1] <= w[0]).count();
        down as f64 >= 0.8 * steps as f64
    }
}

/// Window length of the Picard moving average.
pub const PICARD_WINDOW: usize = 15;

/// Default trailing fraction for the plateau estimate.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.3;

fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    v.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseEstimate {
    /// Estimated per-component noise level η̂.
    pub eta: f64,
    pub tail_fraction: f64,
    /// First index from which the smoothed coefficients stay at noise level;
    /// equivalently, the number of usable coefficients.
    pub plateau_index: usize,
}

/// `1 / Φ⁻¹(3/4)`: scales the median of `|N(0, η²)|` samples to `η`.
const HALF_NORMAL_MEDIAN_SCALE: f64 = 1.482_602_218_505_602;

/// Estimates the noise plateau from the trailing `tail_fraction` of coefficients.
///
/// `η̂` is the median of `|c_i|` over the tail, scaled to be a consistent
/// estimate of the per-component standard deviation, and never below the
/// roundoff level `ε‖c‖`: exact data still carries rounding noise from the
/// transform, and its level varies along the spectrum. The plateau index is the
/// first index after which the forward moving average of `|c_i|` never again
/// exceeds `2 η̂`.
pub fn noise_plateau(series: &PicardSeries, tail_fraction: f64) -> Result<NoiseEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(invalid(format!("tail_fraction must lie in (0, 1), got {tail_fraction}")));
    }
    let n = series.len();
    if n == 0 {
        return Err(invalid("empty Picard series"));
    }
    let tail = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let mut mags: Vec<f64> = series.entries[n - tail..].iter().map(|e| e.abs_coeff).collect();
    mags.sort_by(f64::total_cmp);
    let median = if tail % 2 == 1 {
        mags[tail / 2]
    } else {
        0.5 * (mags[tail / 2 - 1] + mags[tail / 2])
    };
    let norm = series.entries.iter().map(|e| e.coeff * e.coeff).sum::<f64>().sqrt();
    let eta = (HALF_NORMAL_MEDIAN_SCALE * median).max(f64::EPSILON * norm);

    let abs: Vec<f64> = series.entries.iter().map(|e| e.abs_coeff).collect();
    let w = PICARD_WINDOW.min(n);
    let threshold = 2.0 * eta;
    // forward window means, truncated at the end of the series
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let s = &abs[i..(i + w).min(n)];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let plateau_index = smoothed
        .iter()
        .rposition(|&s| s > threshold)
        .map_or(0, |i| i + 1);
    Ok(NoiseEstimate {
        eta,
        tail_fraction,
        plateau_index,
    })
}
