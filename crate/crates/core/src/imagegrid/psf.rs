use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Square, odd-sized, nonnegative blur kernel normalized to unit sum.
///
/// The center sits at `((k - 1) / 2, (k - 1) / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psf {
    kernel: DMatrix<f64>,
}

impl Psf {
    /// Validates and normalizes a raw kernel.
    pub fn new(kernel: DMatrix<f64>) -> Result<Self> {
        let (r, c) = kernel.shape();
        if r != c {
            return Err(invalid(format!("PSF must be square, got {r}x{c}")));
        }
        if r % 2 == 0 {
            return Err(invalid(format!("PSF size must be odd, got {r}")));
        }
        if kernel.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("PSF entries must be finite and nonnegative"));
        }
        let sum = kernel.sum();
        if sum <= 0.0 {
            return Err(invalid("PSF must have positive mass"));
        }
        Ok(Self {
            kernel: kernel / sum,
        })
    }

    /// The identity blur of size `k`.
    pub fn delta(k: usize) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(invalid(format!("PSF size must be odd, got {k}")));
        }
        let mut kernel = DMatrix::zeros(k, k);
        kernel[(k / 2, k / 2)] = 1.0;
        Self::new(kernel)
    }

    /// Outer product `col ⊗ rowᵀ` of two equal-length 1-D kernels.
    pub fn from_separable(col: &[f64], row: &[f64]) -> Result<Self> {
        if col.len() != row.len() {
            return Err(invalid("separable PSF factors must have equal length"));
        }
        let c = DVector::from_column_slice(col);
        let r = DVector::from_column_slice(row);
        Self::new(&c * r.transpose())
    }

    pub fn size(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn center(&self) -> usize {
        (self.size() - 1) / 2
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn into_kernel(self) -> DMatrix<f64> {
        self.kernel
    }

    /// True when the kernel is unchanged by both horizontal and vertical flips.
    pub fn is_doubly_symmetric(&self, tol: f64) -> bool {
        let k = self.size();
        let scale = self.kernel.amax().max(f64::MIN_POSITIVE);
        (0..k).all(|i| {
            (0..k).all(|j| {
                let v = self.kernel[(i, j)];
                (v - self.kernel[(k - 1 - i, j)]).abs() <= tol * scale
                    && (v - self.kernel[(i, k - 1 - j)]).abs() <= tol * scale
            })
        })
    }

    /// Row and column marginals.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let col = self.kernel.column_sum().iter().copied().collect();
        let row = self.kernel.row_sum().iter().copied().collect();
        (col, row)
    }
}

/// Anisotropic Gaussian kernel with covariance `[[σ1², ρ²], [ρ², σ2²]]`.
///
/// Axis 1 runs along rows (the first index), axis 2 along columns.
pub fn gaussian_psf(k: usize, sigma1: f64, sigma2: f64, rho: f64) -> Result<Psf> {
    if k.is_multiple_of(2) || k == 0 {
        return Err(invalid(format!("PSF size must be odd, got {k}")));
    }
    if !(sigma1 > 0.0 && sigma2 > 0.0) {
        return Err(invalid("Gaussian widths must be positive"));
    }
    let (a, b, d) = (sigma1 * sigma1, rho * rho, sigma2 * sigma2);
    let det = a * d - b * b;
    if det <= 0.0 {
        return Err(invalid(format!(
            "covariance is not positive definite (rho^2 = {b} must be below sigma1*sigma2 = {})",
            sigma1 * sigma2
        )));
    }
    // inverse of [[a, b], [b, d]]
    let (ia, ib, id) = (d / det, -b / det, a / det);
    let c = ((k - 1) / 2) as f64;
    let kernel = DMatrix::from_fn(k, k, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-0.5 * (ia * di * di + 2.0 * ib * di * dj + id * dj * dj)).exp()
    });
    Psf::new(kernel)
}

/// Width rule pairing a Gaussian kernel size with its standard deviation.
pub fn gaussian_sigma_for_kernel(kernel_size: usize) -> f64 {
    0.3 * ((kernel_size as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Random camera-shake style kernel.
///
/// A smooth random walk of `trajectory_steps` points with unit spacing is
/// shrunk (never enlarged) to fit the `k × k` window, centered on its bounding
/// box, and splatted bilinearly at four samples per segment.
pub fn motion_psf(k: usize, trajectory_steps: usize, seed: u64) -> Result<Psf> {
    if k.is_multiple_of(2) {
        return Err(invalid(format!("PSF size must be odd, got {k}")));
    }
    if trajectory_steps == 0 {
        return Err(invalid("trajectory_steps must be at least 1"));
    }
    let half = ((k - 1) / 2) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angle: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let mut points = Vec::with_capacity(trajectory_steps);
    let (mut y, mut x) = (0.0f64, 0.0f64);
    points.push((y, x));
    for _ in 1..trajectory_steps {
        let turn: f64 = rng.sample(StandardNormal);
        angle += 0.5 * turn;
        y += angle.sin();
        x += angle.cos();
        points.push((y, x));
    }
    let (min_y, max_y) = min_max(points.iter().map(|p| p.0));
    let (min_x, max_x) = min_max(points.iter().map(|p| p.1));
    let extent = (max_y - min_y).max(max_x - min_x);
    let scale = if extent > 2.0 * half { 2.0 * half / extent } else { 1.0 };
    let (mid_y, mid_x) = (0.5 * (min_y + max_y), 0.5 * (min_x + max_x));
    let place = |(py, px): (f64, f64)| ((py - mid_y) * scale + half, (px - mid_x) * scale + half);

    let mut kernel = DMatrix::zeros(k, k);
    let mut splat = |(py, px): (f64, f64), w: f64| {
        let (i0, j0) = (py.floor().max(0.0), px.floor().max(0.0));
        let (fy, fx) = (py - i0, px - j0);
        for (di, wy) in [(0usize, 1.0 - fy), (1, fy)] {
            for (dj, wx) in [(0usize, 1.0 - fx), (1, fx)] {
                let (i, j) = (i0 as usize + di, j0 as usize + dj);
                if wy * wx > 0.0 && i < k && j < k {
                    kernel[(i, j)] += w * wy * wx;
                }
            }
        }
    };
    const SAMPLES: usize = 4;
    if points.len() == 1 {
        splat(place(points[0]), 1.0);
    }
    for seg in points.windows(2) {
        let (a, b) = (place(seg[0]), place(seg[1]));
        for s in 0..SAMPLES {
            let t = (s as f64 + 0.5) / SAMPLES as f64;
            splat((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)), 1.0);
        }
    }
    Psf::new(kernel)
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_gaussian_is_doubly_symmetric_and_rotation_invariant() {
        let p = gaussian_psf(7, 1.3, 1.3, 0.0).unwrap();
        let k = p.kernel();
        assert!(p.is_doubly_symmetric(1e-14));
        for i in 0..7 {
            for j in 0..7 {
                assert!((k[(i, j)] - k[(j, 6 - i)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn width_rule_values() {
        assert_eq!(gaussian_sigma_for_kernel(13), 2.3);
        assert!((gaussian_sigma_for_kernel(3) - 0.8).abs() < 1e-15);
        assert!((gaussian_sigma_for_kernel(7) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn kernel_13_with_width_rule() {
        let p = gaussian_psf(13, 2.3, 2.3, 0.0).unwrap();
        assert_eq!(p.size(), 13);
        assert!((p.kernel().sum() - 1.0).abs() < 1e-12);
        assert!(p.is_doubly_symmetric(1e-14));
    }

    fn axis1_second_moment(p: &Psf) -> f64 {
        let c = p.center() as f64;
        p.kernel()
            .row_iter()
            .enumerate()
            .map(|(i, r)| (i as f64 - c).powi(2) * r.sum())
            .sum()
    }

    #[test]
    fn wider_axis1_increases_axis1_moment() {
        let mut last = 0.0;
        for s1 in [0.6, 0.9, 1.2, 1.6, 2.0] {
            let m = axis1_second_moment(&gaussian_psf(9, s1, 1.0, 0.5).unwrap());
            assert!(m > last, "moment {m} not above {last}");
            last = m;
        }
    }

    #[test]
    fn zero_orientation_is_separable() {
        let p = gaussian_psf(9, 1.1, 2.1, 0.0).unwrap();
        let (col, row) = p.marginals();
        let outer = DVector::from_vec(col) * DVector::from_vec(row).transpose();
        assert!((outer - p.kernel()).amax() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_bad_parameters() {
        assert!(gaussian_psf(4, 1.0, 1.0, 0.0).is_err());
        assert!(gaussian_psf(5, 0.0, 1.0, 0.0).is_err());
        assert!(gaussian_psf(5, 1.0, 1.0, 1.0).is_err());
        assert!(gaussian_psf(5, 1.0, 4.0, 1.9).is_ok());
    }

    #[test]
    fn psf_validation() {
        assert!(Psf::new(DMatrix::zeros(3, 3)).is_err());
        assert!(Psf::new(DMatrix::from_element(2, 2, 1.0)).is_err());
        assert!(Psf::new(DMatrix::from_element(3, 1, 1.0)).is_err());
        let mut neg = DMatrix::from_element(3, 3, 1.0);
        neg[(0, 0)] = -0.5;
        assert!(Psf::new(neg).is_err());
        let p = Psf::new(DMatrix::from_element(3, 3, 2.0)).unwrap();
        assert!((p.kernel().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_step_motion_is_delta() {
        assert_eq!(motion_psf(7, 1, 99).unwrap(), Psf::delta(7).unwrap());
    }

    #[test]
    fn long_motion_spreads_over_window() {
        let p = motion_psf(7, 40, 11).unwrap();
        let support = p.kernel().iter().filter(|v| **v > 1e-3).count();
        assert!(support >= 7, "support {support}");
    }

    #[test]
    fn motion_is_deterministic() {
        let a = motion_psf(9, 40, 5).unwrap();
        let b = motion_psf(9, 40, 5).unwrap();
        assert_eq!(a.kernel().as_slice(), b.kernel().as_slice());
    }

    #[test]
    fn motion_kernels_are_valid_over_many_seeds() {
        for seed in 0..100 {
            let p = motion_psf(7, 25, seed).unwrap();
            assert!(p.kernel().iter().all(|v| *v >= 0.0));
            assert!((p.kernel().sum() - 1.0).abs() < 1e-12);
        }
    }
}
