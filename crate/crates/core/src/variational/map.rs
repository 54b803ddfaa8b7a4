use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::regularizer::RegularizerSpec;
use crate::error::{invalid, DeblurError, Result};
use crate::imagegrid::{BoundaryCondition, Convolution, Image, Psf};

/// `λ_n = λ₁ / r^{n−1}` for `n = 1..=levels`.
pub fn lambda_schedule(initial: f64, ratio: f64, levels: usize) -> Result<Vec<f64>> {
    if !(initial > 0.0 && initial.is_finite()) {
        return Err(invalid(format!("initial lambda must be positive, got {initial}")));
    }
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(invalid(format!("schedule ratio must exceed 1, got {ratio}")));
    }
    Ok((0..levels).map(|n| initial / ratio.powi(n as i32)).collect())
}

/// How the alternating steps pick their lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepControl {
    /// Constant steps `τ_x`, `τ_h`, always taken.
    ///
    /// The objective may rise between iterations. This is what lets the
    /// estimate leave the no-blur pair `(y, δ)`, which is a stationary point
    /// of the objective.
    Fixed,
    /// Steps start at `τ_x`, `τ_h` and are halved until the objective does not
    /// increase; the trace is then non-increasing within every stage.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapConfig {
    pub kernel_size: usize,
    pub q: f64,
    pub eps: f64,
    /// Prior strength `k`.
    pub strength: f64,
    /// Noise variance `σ²`.
    pub noise_variance: f64,
    pub lambda_initial: f64,
    pub lambda_ratio: f64,
    pub levels: usize,
    pub iterations_per_level: usize,
    pub x_step: f64,
    pub h_step: f64,
    pub step_control: StepControl,
    pub boundary: BoundaryCondition,
}

impl MapConfig {
    /// `q = 0.7`, `ε = 1e−3`, `k = 1000`; schedule `λ₁ = 2`, `r = 1.5` over six
    /// levels of 200 iterations; fixed steps `τ_x = 0.2`, `τ_h = 1e−3`.
    ///
    /// The steps assume intensities in `[0, 1]`.
    pub fn new(kernel_size: usize, noise_variance: f64) -> Self {
        MapConfig {
            kernel_size,
            q: 0.7,
            eps: 1e-3,
            strength: 1e3,
            noise_variance,
            lambda_initial: 2.0,
            lambda_ratio: 1.5,
            levels: 6,
            iterations_per_level: 200,
            x_step: 0.2,
            h_step: 1e-3,
            step_control: StepControl::Fixed,
            boundary: BoundaryCondition::Reflexive,
        }
    }

    fn prior(&self) -> RegularizerSpec {
        RegularizerSpec::SparseEdge {
            q: self.q,
            eps: self.eps,
            strength: self.strength,
            noise_variance: self.noise_variance,
        }
    }

    fn validate(&self) -> Result<()> {
        self.prior().validate()?;
        lambda_schedule(self.lambda_initial, self.lambda_ratio, self.levels)?;
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        if !(self.x_step > 0.0 && self.h_step > 0.0 && self.x_step.is_finite() && self.h_step.is_finite()) {
            return Err(invalid("step sizes must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapTraceEntry {
    /// 1-based schedule level.
    pub stage: usize,
    pub lambda: f64,
    /// Iteration within the stage; 0 is the state entering it.
    pub iteration: usize,
    /// `½‖y − h∗x‖² + kσ²λ_n Σ(f_i + ε)^q`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOutcome {
    pub image: DMatrix<f64>,
    pub psf: Psf,
    pub trace: Vec<MapTraceEntry>,
}

const MAX_BACKTRACKS: usize = 40;

struct Problem<'a> {
    y: &'a DMatrix<f64>,
    prior: RegularizerSpec,
    weight: f64,
}

impl Problem<'_> {
    fn objective(&self, conv: &Convolution, x: &DMatrix<f64>) -> Result<f64> {
        let r = conv.apply(x)? - self.y;
        let prior = if self.weight > 0.0 { self.prior.value(x)? } else { 0.0 };
        Ok(0.5 * r.norm_squared() + self.weight * prior)
    }

    fn image_gradient(&self, conv: &Convolution, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut grad = conv.adjoint(&(conv.apply(x)? - self.y))?;
        if self.weight > 0.0 {
            let (_, g) = self.prior.value_and_gradient(x)?;
            grad += g * self.weight;
        }
        Ok(grad)
    }

    fn kernel_gradient(&self, conv: &Convolution, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        conv.kernel_gradient(x, &(conv.apply(x)? - self.y))
    }
}

/// Clip negatives, then rescale to unit sum; falls back to a delta when nothing survives.
fn project_kernel(h: &DMatrix<f64>) -> Result<Psf> {
    let clipped = h.map(|v| v.max(0.0));
    if !(clipped.sum() > 0.0) {
        return Psf::delta(h.nrows());
    }
    Psf::new(clipped)
}

fn with_kernel(conv: &Convolution, h: &DMatrix<f64>) -> Result<Convolution> {
    let mut next = conv.clone();
    next.set_psf(project_kernel(h)?)?;
    Ok(next)
}

/// Alternating minimization of `½‖y − h∗x‖² + kσ²λ_n Σ(f_i(x) + ε)^q` along the `λ` schedule.
///
/// Starts from `x = y` and a delta kernel. Each iteration takes a gradient step
/// in `x` with `h` fixed, then a gradient step on the data term in `h` with `x`
/// fixed, followed by projection onto nonnegative kernels of unit sum.
pub fn map_blind_deblur(y: &DMatrix<f64>, cfg: &MapConfig) -> Result<MapOutcome> {
    cfg.validate()?;
    let (m, n) = y.shape();
    if cfg.kernel_size > m || cfg.kernel_size > n {
        return Err(DeblurError::KernelTooLarge { kernel: cfg.kernel_size, dim: m.min(n) });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DeblurError::NonFinite(0));
    }
    let schedule = lambda_schedule(cfg.lambda_initial, cfg.lambda_ratio, cfg.levels)?;

    let mut x = y.clone();
    let mut conv = Convolution::new(Psf::delta(cfg.kernel_size)?, cfg.boundary, m, n)?;
    let (mut tau_x, mut tau_h) = (cfg.x_step, cfg.h_step);
    let mut trace = Vec::with_capacity(cfg.levels * (cfg.iterations_per_level + 1));

    for (level, &lambda) in schedule.iter().enumerate() {
        let problem = Problem {
            y,
            prior: cfg.prior(),
            weight: cfg.strength * cfg.noise_variance * lambda,
        };
        let stage = level + 1;
        let mut current = problem.objective(&conv, &x)?;
        trace.push(MapTraceEntry { stage, lambda, iteration: 0, objective: current });

        for iteration in 1..=cfg.iterations_per_level {
            let gx = problem.image_gradient(&conv, &x)?;
            match cfg.step_control {
                StepControl::Fixed => x -= gx * cfg.x_step,
                StepControl::Backtracking => {
                    for _ in 0..MAX_BACKTRACKS {
                        let candidate = &x - &gx * tau_x;
                        let f = problem.objective(&conv, &candidate)?;
                        if f <= current {
                            x = candidate;
                            current = f;
                            tau_x = (tau_x * 1.5).min(cfg.x_step);
                            break;
                        }
                        tau_x *= 0.5;
                    }
                }
            }

            let gh = problem.kernel_gradient(&conv, &x)?;
            let h = conv.psf().kernel().clone();
            match cfg.step_control {
                StepControl::Fixed => conv = with_kernel(&conv, &(&h - gh * cfg.h_step))?,
                StepControl::Backtracking => {
                    for _ in 0..MAX_BACKTRACKS {
                        let trial = with_kernel(&conv, &(&h - &gh * tau_h))?;
                        let f = problem.objective(&trial, &x)?;
                        if f <= current {
                            conv = trial;
                            current = f;
                            tau_h = (tau_h * 1.5).min(cfg.h_step);
                            break;
                        }
                        tau_h *= 0.5;
                    }
                }
            }

            if cfg.step_control == StepControl::Fixed {
                current = problem.objective(&conv, &x)?;
            }
            if !current.is_finite() {
                return Err(DeblurError::NonFinite(iteration));
            }
            trace.push(MapTraceEntry { stage, lambda, iteration, objective: current });
        }
    }

    Ok(MapOutcome { image: x, psf: conv.psf().clone(), trace })
}

/// Runs [`map_blind_deblur`] on every channel independently.
pub fn map_blind_deblur_image(y: &Image, cfg: &MapConfig) -> Result<(Image, Vec<Psf>, Vec<Vec<MapTraceEntry>>)> {
    let mut images = Vec::with_capacity(y.channel_count());
    let mut kernels = Vec::with_capacity(y.channel_count());
    let mut traces = Vec::with_capacity(y.channel_count());
    for channel in y.channels() {
        let out = map_blind_deblur(channel, cfg)?;
        images.push(out.image);
        kernels.push(out.psf);
        traces.push(out.trace);
    }
    Ok((Image::new(images)?, kernels, traces))
}

/// Maximum normalized cross-correlation between two kernels over relative shifts.
///
/// Kernels are compared on a common zero-padded canvas, so sizes may differ.
/// Blind estimates are only identifiable up to translation, hence the maximum.
pub fn kernel_similarity(a: &Psf, b: &Psf) -> f64 {
    let ka = a.kernel();
    let kb = b.kernel();
    let (ca, cb) = (a.center() as isize, b.center() as isize);
    let reach = ca.max(cb);
    let norm = ka.norm() * kb.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let mut acc = 0.0;
            for j in 0..ka.ncols() as isize {
                for i in 0..ka.nrows() as isize {
                    let bi = i - ca + cb + di;
                    let bj = j - ca + cb + dj;
                    if bi >= 0 && bj >= 0 && (bi as usize) < kb.nrows() && (bj as usize) < kb.ncols() {
                        acc += ka[(i as usize, j as usize)] * kb[(bi as usize, bj as usize)];
                    }
                }
            }
            best = best.max(acc / norm);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagegrid::{gaussian_psf, motion_psf};

    fn blocks(m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |i, j| {
            let a = if (i / 6 + j / 9) % 2 == 0 { 0.2 } else { 0.8 };
            if i > m / 2 && j < n / 3 { 0.5 } else { a }
        })
    }

    #[test]
    fn schedule_is_geometric() {
        let s = lambda_schedule(2.0, 1.5, 6).unwrap();
        for (k, v) in s.iter().enumerate() {
            assert!((v - 2.0 / 1.5f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!((s[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!((s[2] - 8.0 / 9.0).abs() < 1e-15);
        assert!(lambda_schedule(2.0, 1.0, 3).is_err());
        assert!(lambda_schedule(0.0, 1.5, 3).is_err());
    }

    #[test]
    fn sharp_noise_free_input_is_fixed() {
        let y = blocks(20, 20);
        let mut cfg = MapConfig::new(5, 0.0);
        cfg.levels = 2;
        cfg.iterations_per_level = 10;
        let out = map_blind_deblur(&y, &cfg).unwrap();
        let delta = Psf::delta(5).unwrap();
        assert!((out.psf.kernel() - delta.kernel()).amax() < 1e-6);
        assert!((&out.image - &y).amax() < 1e-6);
    }

    #[test]
    fn objective_monotone_within_stages() {
        let x = blocks(24, 24);
        let truth = gaussian_psf(5, 1.0, 1.0, 0.0).unwrap();
        let y = Convolution::new(truth, BoundaryCondition::Reflexive, 24, 24).unwrap().apply(&x).unwrap();
        let mut cfg = MapConfig::new(5, 1e-4);
        cfg.step_control = StepControl::Backtracking;
        cfg.levels = 3;
        cfg.iterations_per_level = 15;
        let out = map_blind_deblur(&y, &cfg).unwrap();
        assert_eq!(out.trace.len(), 3 * 16);
        for w in out.trace.windows(2) {
            if w[0].stage == w[1].stage {
                assert!(w[1].objective <= w[0].objective);
            }
        }
        let k = out.psf.kernel();
        assert!(k.iter().all(|v| *v >= 0.0));
        assert!((k.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_kernel_and_bad_schedule() {
        let y = blocks(6, 6);
        assert!(matches!(
            map_blind_deblur(&y, &MapConfig::new(7, 0.0)),
            Err(DeblurError::KernelTooLarge { .. })
        ));
        let mut cfg = MapConfig::new(3, 0.0);
        cfg.lambda_ratio = 0.5;
        assert!(map_blind_deblur(&y, &cfg).is_err());
    }

    #[test]
    fn similarity_is_shift_tolerant() {
        let a = motion_psf(7, 12, 3).unwrap();
        assert!((kernel_similarity(&a, &a) - 1.0).abs() < 1e-12);
        let mut shifted = DMatrix::zeros(9, 9);
        shifted.view_mut((2, 0), (7, 7)).copy_from(a.kernel());
        let b = Psf::new(shifted).unwrap();
        assert!((kernel_similarity(&a, &b) - 1.0).abs() < 1e-12);
        let delta = Psf::delta(7).unwrap();
        assert!(kernel_similarity(&a, &delta) < 0.9);
    }
}
