use nalgebra::DMatrix;

use super::{pad, BoundaryCondition, Psf};
use crate::error::{shape_err, DeblurError, Result};

/// True 2-D convolution of `x` with `psf`, same-size output.
///
/// `G(i0, j0) = Σ_{a,b} P(a, b) · X̃(i0 + c − a, j0 + c − b)` where `X̃` is the
/// boundary extension of `x` and `c` the PSF center.
pub fn convolve2d(x: &DMatrix<f64>, psf: &Psf, bc: BoundaryCondition) -> Result<DMatrix<f64>> {
    Convolution::new(psf.clone(), bc, x.nrows(), x.ncols())?.apply(x)
}

/// A PSF bound to an image size and boundary condition, with the adjoints
/// needed by gradient-based solvers.
#[derive(Debug, Clone)]
pub struct Convolution {
    psf: Psf,
    bc: BoundaryCondition,
    height: usize,
    width: usize,
}

impl Convolution {
    pub fn new(psf: Psf, bc: BoundaryCondition, height: usize, width: usize) -> Result<Self> {
        let k = psf.size();
        let dim = height.min(width);
        if k > dim {
            return Err(DeblurError::KernelTooLarge { kernel: k, dim });
        }
        Ok(Self {
            psf,
            bc,
            height,
            width,
        })
    }

    pub fn psf(&self) -> &Psf {
        &self.psf
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Swaps in a new kernel of the same size.
    pub fn set_psf(&mut self, psf: Psf) -> Result<()> {
        if psf.size() != self.psf.size() {
            return Err(shape_err(
                (self.psf.size(), self.psf.size()),
                (psf.size(), psf.size()),
            ));
        }
        self.psf = psf;
        Ok(())
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.shape() != (self.height, self.width) {
            return Err(shape_err((self.height, self.width), x.shape()));
        }
        Ok(())
    }

    fn padded(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        pad(x, self.bc, self.psf.center())
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let xp = self.padded(x)?;
        Ok(valid_convolution(&xp, self.psf.kernel(), self.height, self.width))
    }

    /// Adjoint with respect to the image: `⟨conv(x), g⟩ = ⟨x, adjoint(g)⟩`.
    pub fn adjoint(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(g)?;
        let (m, n) = (self.height, self.width);
        let kernel = self.psf.kernel();
        let k = kernel.nrows();
        let c = self.psf.center();
        let mut xp = DMatrix::<f64>::zeros(m + 2 * c, n + 2 * c);
        for b in 0..k {
            for a in 0..k {
                let w = kernel[(a, b)];
                if w == 0.0 {
                    continue;
                }
                for j0 in 0..n {
                    let q = j0 + 2 * c - b;
                    for i0 in 0..m {
                        xp[(i0 + 2 * c - a, q)] += w * g[(i0, j0)];
                    }
                }
            }
        }
        // fold the extension back onto its source pixels
        let r = c as isize;
        let mut out = DMatrix::zeros(m, n);
        for q in 0..n + 2 * c {
            let Some(sj) = self.bc.source(q as isize - r, n) else {
                continue;
            };
            for p in 0..m + 2 * c {
                if let Some(si) = self.bc.source(p as isize - r, m) {
                    out[(si, sj)] += xp[(p, q)];
                }
            }
        }
        Ok(out)
    }

    /// Gradient of `⟨r, conv(x, P)⟩` with respect to the kernel entries `P`.
    pub fn kernel_gradient(&self, x: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        self.check(r)?;
        let (m, n) = (self.height, self.width);
        let k = self.psf.size();
        let c = self.psf.center();
        let xp = self.padded(x)?;
        Ok(DMatrix::from_fn(k, k, |a, b| {
            let mut acc = 0.0;
            for j0 in 0..n {
                let q = j0 + 2 * c - b;
                for i0 in 0..m {
                    acc += r[(i0, j0)] * xp[(i0 + 2 * c - a, q)];
                }
            }
            acc
        }))
    }
}

fn valid_convolution(xp: &DMatrix<f64>, kernel: &DMatrix<f64>, m: usize, n: usize) -> DMatrix<f64> {
    let k = kernel.nrows();
    let c = (k - 1) / 2;
    let mut out = DMatrix::zeros(m, n);
    for b in 0..k {
        for a in 0..k {
            let w = kernel[(a, b)];
            if w == 0.0 {
                continue;
            }
            for j0 in 0..n {
                let q = j0 + 2 * c - b;
                for i0 in 0..m {
                    out[(i0, j0)] += w * xp[(i0 + 2 * c - a, q)];
                }
            }
        }
    }
    out
}
