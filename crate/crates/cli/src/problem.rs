use anyhow::{bail, Context, Result};
use deblur::filters::FilterSpec;
use deblur::imagegrid::io::read_psf_csv;
use deblur::imagegrid::{gaussian_psf, motion_psf};
use deblur::operator::{DenseOperator, LinearOperator, SeparableBlur};
use deblur::paramselect::{
    default_alpha_grid, discrepancy, gcv_tikhonov, gcv_tsvd, lcurve, SelectionResult, DEFAULT_DISCREPANCY_SAFETY,
    DEFAULT_GRID_POINTS,
};
use deblur::spectral::{
    noise_plateau, picard_series, svd_dense, svd_separable, NoiseEstimate, PicardSeries, SvdTriple,
    DEFAULT_TAIL_FRACTION,
};
use deblur::{BoundaryCondition, Psf};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::args::{Method, PsfSource, Selector};

/// A seed that is drawn at random on first use when none was given.
pub struct Seed {
    value: Option<u64>,
    generated: bool,
}

impl Seed {
    pub fn new(value: Option<u64>) -> Self {
        Self { value, generated: false }
    }

    pub fn get(&mut self) -> u64 {
        *self.value.get_or_insert_with(|| {
            self.generated = true;
            rand::random()
        })
    }

    pub fn summary(&self) -> Value {
        json!({ "value": self.value, "generated": self.generated })
    }
}

/// Builds the PSF and a JSON description of where it came from.
pub fn resolve_psf(source: &PsfSource, seed: &mut Seed) -> Result<(Psf, Value)> {
    Ok(match source {
        PsfSource::File(path) => (
            read_psf_csv(path).with_context(|| format!("reading PSF {}", path.display()))?,
            json!({ "kind": "file", "path": path }),
        ),
        &PsfSource::Gauss { k, s1, s2, rho } => (
            gaussian_psf(k, s1, s2, rho)?,
            json!({ "kind": "gauss", "k": k, "sigma1": s1, "sigma2": s2, "rho": rho }),
        ),
        &PsfSource::Motion { k, steps } => {
            let s = seed.get();
            (
                motion_psf(k, steps, s)?,
                json!({ "kind": "motion", "k": k, "steps": steps, "seed": s }),
            )
        }
    })
}

/// SVD of the blur: Kronecker-structured when the PSF factors, dense otherwise.
pub struct Spectral {
    pub svd: SvdTriple,
    pub structure: &'static str,
}

pub fn spectral(psf: &Psf, bc: BoundaryCondition, m: usize, n: usize) -> Result<Spectral> {
    if let Ok(op) = SeparableBlur::from_psf(psf, m, n, bc) {
        return Ok(Spectral { svd: svd_separable(&op), structure: "separable" });
    }
    let dense = DenseOperator::from_psf(psf, m, n, bc).context("PSF is not separable, so a dense SVD is needed")?;
    Ok(Spectral { svd: svd_dense(&dense)?, structure: "dense" })
}

pub struct Diagnostics {
    pub series: PicardSeries,
    pub noise: NoiseEstimate,
    pub picard_satisfied: bool,
}

pub fn diagnostics(svd: &SvdTriple, b: &DVector<f64>) -> Result<Diagnostics> {
    let series = picard_series(svd, b)?;
    let noise = noise_plateau(&series, DEFAULT_TAIL_FRACTION)?;
    let picard_satisfied = series.picard_satisfied(noise.plateau_index);
    Ok(Diagnostics { series, noise, picard_satisfied })
}

/// Spectral filter chosen by `selector`, with the selection record when one ran.
pub fn choose_filter(
    method: Method,
    selector: Selector,
    svd: &SvdTriple,
    b: &DVector<f64>,
    noise_norm: Option<f64>,
) -> Result<(FilterSpec, Option<SelectionResult>)> {
    let selection = match (method, selector) {
        (Method::Tsvd, Selector::Fixed(v)) => {
            if v.fract() != 0.0 || v < 1.0 {
                bail!("tsvd needs an integer truncation index >= 1, got {v}");
            }
            return Ok((FilterSpec::Tsvd { k: v as usize }, None));
        }
        (_, Selector::Fixed(alpha)) => return Ok((FilterSpec::Tikhonov { alpha }, None)),
        (Method::Tsvd, Selector::Gcv) => gcv_tsvd(svd, b)?,
        (Method::Tsvd, _) => bail!("tsvd supports the fixed and gcv selectors only"),
        (_, Selector::Gcv) => gcv_tikhonov(svd, b, &default_alpha_grid(svd.singular_values(), DEFAULT_GRID_POINTS)?)?,
        (_, Selector::Lcurve) => lcurve(svd, b, &default_alpha_grid(svd.singular_values(), DEFAULT_GRID_POINTS)?)?,
        (_, Selector::Discrepancy) => {
            let norm = noise_norm.context("the discrepancy selector needs --noise")?;
            discrepancy(svd, b, norm, DEFAULT_DISCREPANCY_SAFETY)?
        }
    };
    Ok((selection.parameter.filter(), Some(selection)))
}

pub fn filter_summary(spec: &FilterSpec) -> Value {
    match spec {
        FilterSpec::Tsvd { k } => json!({ "kind": "tsvd", "k": k }),
        FilterSpec::Tikhonov { alpha } => json!({ "kind": "tikhonov", "alpha": alpha }),
        FilterSpec::Custom { .. } => json!({ "kind": "naive" }),
    }
}

/// Upper estimate of `‖A‖₂²` by power iteration on `AᵀA`, padded by 2%.
pub fn operator_norm_sq(op: &dyn LinearOperator) -> f64 {
    let size = op.dim();
    let mut v = DVector::from_fn(size, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..100 {
        let w = op.apply_transpose_vec(&op.apply_vec(&v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= 1e-10 * norm;
        estimate = norm;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate * 1.02
}

#[cfg(test)]
mod tests {
    use super::*;
    use deblur::imagegrid::gaussian_sigma_for_kernel;

    #[test]
    fn seed_is_generated_once() {
        let mut s = Seed::new(None);
        let a = s.get();
        assert_eq!(s.get(), a);
        assert_eq!(s.summary()["generated"], true);
        let mut fixed = Seed::new(Some(5));
        assert_eq!(fixed.get(), 5);
        assert_eq!(fixed.summary()["generated"], false);
    }

    #[test]
    fn separable_psf_uses_kronecker_svd() {
        let s = gaussian_sigma_for_kernel(5);
        let psf = gaussian_psf(5, s, s, 0.0).unwrap();
        assert_eq!(spectral(&psf, BoundaryCondition::Reflexive, 8, 9).unwrap().structure, "separable");
        let tilted = gaussian_psf(5, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(spectral(&tilted, BoundaryCondition::Reflexive, 8, 9).unwrap().structure, "dense");
    }

    #[test]
    fn norm_estimate_bounds_the_top_singular_value() {
        let psf = gaussian_psf(3, 0.7, 0.7, 0.0).unwrap();
        let op = SeparableBlur::from_psf(&psf, 7, 6, BoundaryCondition::Zero).unwrap();
        let top = svd_separable(&op).singular_values().max();
        let est = operator_norm_sq(&op);
        assert!(est >= top * top && est <= 1.03 * top * top, "{est} vs {}", top * top);
    }

    #[test]
    fn tsvd_rejects_fractional_index_and_lcurve() {
        let psf = gaussian_psf(3, 0.7, 0.7, 0.0).unwrap();
        let sp = spectral(&psf, BoundaryCondition::Reflexive, 5, 5).unwrap();
        let b = DVector::from_element(25, 0.5);
        assert!(choose_filter(Method::Tsvd, Selector::Fixed(2.5), &sp.svd, &b, None).is_err());
        assert!(choose_filter(Method::Tsvd, Selector::Lcurve, &sp.svd, &b, None).is_err());
        assert!(choose_filter(Method::Tikhonov, Selector::Discrepancy, &sp.svd, &b, None).is_err());
        let (spec, sel) = choose_filter(Method::Tsvd, Selector::Fixed(3.0), &sp.svd, &b, None).unwrap();
        assert_eq!(spec, FilterSpec::Tsvd { k: 3 });
        assert!(sel.is_none());
    }
}
