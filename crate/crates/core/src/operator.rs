//! The forward blurring operator `A` in separable, dense and diagonalized forms.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, shape_err, DeblurError, Result};
use crate::imagegrid::{convolve2d, unvectorize, vectorize, BoundaryCondition, Convolution, Psf};

/// Largest `N = m·n` for which dense assembly and dense SVD are allowed.
pub const DENSE_CAP: usize = 4096;

/// A linear map on column-stacked images, with its transpose.
pub trait LinearOperator {
    /// Length of the vectors the operator acts on.
    fn dim(&self) -> usize;
    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose_vec(&self, y: &DVector<f64>) -> DVector<f64>;
}

/// `A = A_r ⊗ A_c`, applied as `X ↦ A_c X A_rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableBlur {
    row: DMatrix<f64>,
    col: DMatrix<f64>,
    bc: BoundaryCondition,
    row_kernel: Vec<f64>,
    col_kernel: Vec<f64>,
}

/// Matrix of 1-D convolution with `kernel` on a signal of length `len`.
fn convolution_matrix(kernel: &[f64], len: usize, bc: BoundaryCondition) -> DMatrix<f64> {
    let c = (kernel.len() - 1) / 2;
    let mut a = DMatrix::zeros(len, len);
    for i in 0..len {
        for (t, &w) in kernel.iter().enumerate() {
            let idx = i as isize + c as isize - t as isize;
            if let Some(s) = bc.source(idx, len) {
                a[(i, s)] += w;
            }
        }
    }
    a
}

fn check_kernel(kernel: &[f64], len: usize, name: &str) -> Result<()> {
    if kernel.is_empty() || kernel.len().is_multiple_of(2) {
        return Err(invalid(format!("{name} kernel length must be odd, got {}", kernel.len())));
    }
    if kernel.len() > len {
        return Err(DeblurError::KernelTooLarge {
            kernel: kernel.len(),
            dim: len,
        });
    }
    let sum: f64 = kernel.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(invalid(format!("{name} kernel must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Builds the separable blur of an `m × n` image; see [`SeparableBlur::new`].
pub fn build_separable(
    row_kernel: &[f64],
    col_kernel: &[f64],
    m: usize,
    n: usize,
    bc: BoundaryCondition,
) -> Result<SeparableBlur> {
    SeparableBlur::new(row_kernel, col_kernel, m, n, bc)
}

impl SeparableBlur {
    /// Blur of an `m × n` image by `col_kernel` along columns and
    /// `row_kernel` along rows.
    pub fn new(
        row_kernel: &[f64],
        col_kernel: &[f64],
        m: usize,
        n: usize,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        check_kernel(row_kernel, n, "row")?;
        check_kernel(col_kernel, m, "column")?;
        Ok(Self {
            row: convolution_matrix(row_kernel, n, bc),
            col: convolution_matrix(col_kernel, m, bc),
            bc,
            row_kernel: row_kernel.to_vec(),
            col_kernel: col_kernel.to_vec(),
        })
    }

    /// Separable blur from a rank-one PSF (e.g. a Gaussian with ρ = 0).
    pub fn from_psf(psf: &Psf, m: usize, n: usize, bc: BoundaryCondition) -> Result<Self> {
        let (col, row) = psf.marginals();
        let outer = DVector::from_vec(col.clone()) * DVector::from_vec(row.clone()).transpose();
        if (outer - psf.kernel()).amax() > 1e-12 {
            return Err(invalid("PSF is not separable"));
        }
        Self::new(&row, &col, m, n, bc)
    }

    /// `A_r` (n × n).
    pub fn row_matrix(&self) -> &DMatrix<f64> {
        &self.row
    }

    /// `A_c` (m × m).
    pub fn col_matrix(&self) -> &DMatrix<f64> {
        &self.col
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn row_kernel(&self) -> &[f64] {
        &self.row_kernel
    }

    pub fn col_kernel(&self) -> &[f64] {
        &self.col_kernel
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.col.nrows(), self.row.nrows())
    }

    /// The equivalent 2-D PSF `col_kernel ⊗ row_kernelᵀ`.
    pub fn psf(&self) -> Result<Psf> {
        Psf::from_separable(&self.col_kernel, &self.row_kernel)
    }

    /// `A_c X A_rᵀ`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.shape() != self.shape() {
            return Err(shape_err(self.shape(), x.shape()));
        }
        Ok(&self.col * x * self.row.transpose())
    }

    /// `A_cᵀ Y A_r`.
    pub fn apply_transpose(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.shape() != self.shape() {
            return Err(shape_err(self.shape(), y.shape()));
        }
        Ok(self.col.transpose() * y * &self.row)
    }

    /// `A_r ⊗ A_c` as an explicit `N × N` matrix.
    pub fn assemble_dense(&self) -> Result<DenseOperator> {
        let (m, n) = self.shape();
        check_cap(m * n)?;
        Ok(DenseOperator {
            matrix: self.row.kronecker(&self.col),
            height: m,
            width: n,
            provenance: Provenance::AssembledFromSeparable,
        })
    }
}

impl LinearOperator for SeparableBlur {
    fn dim(&self) -> usize {
        let (m, n) = self.shape();
        m * n
    }

    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.shape();
        let x = unvectorize(x, m, n).expect("vector length matches operator");
        vectorize(&(&self.col * x * self.row.transpose()))
    }

    fn apply_transpose_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.shape();
        let y = unvectorize(y, m, n).expect("vector length matches operator");
        vectorize(&(self.col.transpose() * y * &self.row))
    }
}

impl LinearOperator for Convolution {
    fn dim(&self) -> usize {
        let (m, n) = self.shape();
        m * n
    }

    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.shape();
        let x = unvectorize(x, m, n).expect("vector length matches operator");
        vectorize(&self.apply(&x).expect("shape checked"))
    }

    fn apply_transpose_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.shape();
        let y = unvectorize(y, m, n).expect("vector length matches operator");
        vectorize(&self.adjoint(&y).expect("shape checked"))
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        return Err(DeblurError::DenseCapExceeded { n, cap: DENSE_CAP });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AssembledFromSeparable,
    Explicit,
}

/// Explicit `N × N` forward operator on column-stacked `m × n` images.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    height: usize,
    width: usize,
    provenance: Provenance,
}

impl DenseOperator {
    /// Wraps an explicit matrix acting on `m × n` images.
    pub fn new(matrix: DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        check_cap(n)?;
        if matrix.shape() != (n, n) {
            return Err(shape_err((n, n), matrix.shape()));
        }
        Ok(Self {
            matrix,
            height,
            width,
            provenance: Provenance::Explicit,
        })
    }

    /// Slow path for arbitrary PSFs: column `s` is the blur of the `s`-th unit image.
    pub fn from_psf(psf: &Psf, height: usize, width: usize, bc: BoundaryCondition) -> Result<Self> {
        let n = height * width;
        check_cap(n)?;
        let mut matrix = DMatrix::zeros(n, n);
        let mut unit = DMatrix::zeros(height, width);
        for s in 0..n {
            unit[s] = 1.0;
            let col = convolve2d(&unit, psf, bc)?;
            matrix.set_column(s, &vectorize(&col));
            unit[s] = 0.0;
        }
        Self::new(matrix, height, width)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn apply_image(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.shape() != self.shape() {
            return Err(shape_err(self.shape(), x.shape()));
        }
        unvectorize(&(&self.matrix * vectorize(x)), self.height, self.width)
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn apply_transpose_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }
}

/// Eigenvalues of a transform-diagonalizable blur.
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    /// BCCB operator (periodic BC): diagonalized by the 2-D DFT.
    Fourier(DMatrix<Complex64>),
    /// Doubly symmetric PSF with reflexive BC: diagonalized by the orthonormal 2-D DCT-II.
    Cosine(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagonalization {
    spectrum: Spectrum,
    height: usize,
    width: usize,
}

impl SpectralDiagonalization {
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn basis_name(&self) -> &'static str {
        match self.spectrum {
            Spectrum::Fourier(_) => "fourier",
            Spectrum::Cosine(_) => "cosine",
        }
    }

    /// Eigenvalue moduli in grid order.
    pub fn moduli(&self) -> DMatrix<f64> {
        match &self.spectrum {
            Spectrum::Fourier(l) => l.map(|z| z.norm()),
            Spectrum::Cosine(l) => l.abs(),
        }
    }

    /// Applies the operator through forward transform, pointwise multiply, inverse transform.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.shape() != self.shape() {
            return Err(shape_err(self.shape(), x.shape()));
        }
        Ok(match &self.spectrum {
            Spectrum::Fourier(l) => {
                let mut z = x.map(|v| Complex64::new(v, 0.0));
                fft2(&mut z, false);
                z.component_mul_assign(l);
                fft2(&mut z, true);
                z.map(|c| c.re)
            }
            Spectrum::Cosine(l) => idct2(&dct2(x).component_mul(l)),
        })
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(self.moduli().as_slice())
    }
}

/// Eigenvalues of the periodic-BC blur operator by the 2-D FFT.
pub fn bccb_spectrum(psf: &Psf, m: usize, n: usize) -> Result<SpectralDiagonalization> {
    let k = psf.size();
    if k > m.min(n) {
        return Err(DeblurError::KernelTooLarge { kernel: k, dim: m.min(n) });
    }
    let c = psf.center() as isize;
    let mut z = DMatrix::from_element(m, n, Complex64::new(0.0, 0.0));
    for b in 0..k {
        for a in 0..k {
            let i = (a as isize - c).rem_euclid(m as isize) as usize;
            let j = (b as isize - c).rem_euclid(n as isize) as usize;
            z[(i, j)] += psf.kernel()[(a, b)];
        }
    }
    fft2(&mut z, false);
    Ok(SpectralDiagonalization {
        spectrum: Spectrum::Fourier(z),
        height: m,
        width: n,
    })
}

/// Eigenvalues of the reflexive-BC blur operator for a doubly symmetric PSF.
///
/// The PSF quadrant below and right of the center is folded onto the
/// origin (`Ps(r, s) = Σ P(c+r+dr, c+s+ds)` for `dr, ds ∈ {0, 1}`), and the
/// eigenvalues are `dct2(Ps) ./ dct2(e₁)`.
pub fn dct_spectrum(psf: &Psf, m: usize, n: usize) -> Result<SpectralDiagonalization> {
    let k = psf.size();
    if k > m.min(n) {
        return Err(DeblurError::KernelTooLarge { kernel: k, dim: m.min(n) });
    }
    if !psf.is_doubly_symmetric(1e-12) {
        return Err(DeblurError::NotDoublySymmetric);
    }
    let c = psf.center();
    let p = psf.kernel();
    let at = |i: usize, j: usize| if i < k && j < k { p[(i, j)] } else { 0.0 };
    let mut folded = DMatrix::zeros(m, n);
    for r in 0..=c {
        for s in 0..=c {
            folded[(r, s)] = at(c + r, c + s)
                + at(c + r, c + s + 1)
                + at(c + r + 1, c + s)
                + at(c + r + 1, c + s + 1);
        }
    }
    let num = dct2(&folded);
    let (cm, cn) = (dct_matrix(m), dct_matrix(n));
    let eig = DMatrix::from_fn(m, n, |u, v| num[(u, v)] / (cm[(u, 0)] * cn[(v, 0)]));
    Ok(SpectralDiagonalization {
        spectrum: Spectrum::Cosine(eig),
        height: m,
        width: n,
    })
}

/// `max |v| / min |v|`, or `+∞` when the smallest modulus is exactly zero.
pub fn condition_number(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormal DCT-II matrix: `C[u, j] = w_u cos(π u (2j + 1) / 2n)`.
pub(crate) fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |u, j| {
        let w = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        w * (std::f64::consts::PI * u as f64 * (2 * j + 1) as f64 / (2.0 * nf)).cos()
    })
}

pub(crate) fn dct2(x: &DMatrix<f64>) -> DMatrix<f64> {
    dct_matrix(x.nrows()) * x * dct_matrix(x.ncols()).transpose()
}

pub(crate) fn idct2(y: &DMatrix<f64>) -> DMatrix<f64> {
    dct_matrix(y.nrows()).transpose() * y * dct_matrix(y.ncols())
}

/// In-place 2-D DFT; the inverse includes the `1/(mn)` factor.
pub(crate) fn fft2(z: &mut DMatrix<Complex64>, inverse: bool) {
    let (m, n) = z.shape();
    let mut planner = FftPlanner::new();
    let (fm, fn_) = if inverse {
        (planner.plan_fft_inverse(m), planner.plan_fft_inverse(n))
    } else {
        (planner.plan_fft_forward(m), planner.plan_fft_forward(n))
    };
    for mut col in z.column_iter_mut() {
        let mut buf: Vec<Complex64> = col.iter().copied().collect();
        fm.process(&mut buf);
        col.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    for mut row in z.row_iter_mut() {
        let mut buf: Vec<Complex64> = row.iter().copied().collect();
        fn_.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    if inverse {
        let scale = 1.0 / (m * n) as f64;
        z.iter_mut().for_each(|v| *v *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagegrid::gaussian_psf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL_BC: [BoundaryCondition; 3] = [
        BoundaryCondition::Zero,
        BoundaryCondition::Periodic,
        BoundaryCondition::Reflexive,
    ];

    fn random_kernel(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn delta_kernels_give_identity_factors() {
        for bc in ALL_BC {
            let b = SeparableBlur::new(&[0.0, 1.0, 0.0], &[1.0], 4, 5, bc).unwrap();
            assert_eq!(b.row_matrix(), &DMatrix::identity(5, 5));
            assert_eq!(b.col_matrix(), &DMatrix::identity(4, 4));
            assert_eq!(b.assemble_dense().unwrap().matrix(), &DMatrix::identity(20, 20));
        }
    }

    #[test]
    fn periodic_rows_are_cyclic_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_kernel(&mut rng, 5);
        let b = SeparableBlur::new(&k, &k, 7, 7, BoundaryCondition::Periodic).unwrap();
        let a = b.row_matrix();
        for i in 1..7 {
            for j in 0..7 {
                assert_eq!(a[(i, j)], a[(0, (j + 7 - i) % 7)]);
            }
        }
    }

    #[test]
    fn zero_bc_is_toeplitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, 3);
        let b = SeparableBlur::new(&k, &k, 6, 6, BoundaryCondition::Zero).unwrap();
        let a = b.col_matrix();
        for i in 1..6 {
            for j in 1..6 {
                assert_eq!(a[(i, j)], a[(i - 1, j - 1)]);
            }
        }
    }

    #[test]
    fn separable_apply_matches_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bc in ALL_BC {
            let kr = random_kernel(&mut rng, 3);
            let kc = random_kernel(&mut rng, 5);
            let b = SeparableBlur::new(&kr, &kc, 6, 7, bc).unwrap();
            let psf = Psf::from_separable(&kc, &[0.0, kr[0], kr[1], kr[2], 0.0]).unwrap();
            let x = DMatrix::from_fn(6, 7, |_, _| rng.random::<f64>());
            let direct = convolve2d(&x, &psf, bc).unwrap();
            assert!((b.apply(&x).unwrap() - direct).amax() < 1e-12);
            let mut point = DMatrix::zeros(6, 7);
            point[(3, 2)] = 1.0;
            let direct = convolve2d(&point, &psf, bc).unwrap();
            assert!((b.apply(&point).unwrap() - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn apply_is_exactly_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = random_kernel(&mut rng, 3);
        let b = SeparableBlur::new(&k, &k, 5, 5, BoundaryCondition::Reflexive).unwrap();
        let x = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>());
        assert_eq!(b.apply(&(&x * 2.0)).unwrap(), b.apply(&x).unwrap() * 2.0);
    }

    #[test]
    fn shape_and_length_errors() {
        let b = SeparableBlur::new(&[1.0], &[1.0], 3, 3, BoundaryCondition::Zero).unwrap();
        assert!(b.apply(&DMatrix::zeros(3, 4)).is_err());
        assert!(matches!(
            SeparableBlur::new(&[0.2; 5], &[1.0], 3, 3, BoundaryCondition::Zero),
            Err(DeblurError::KernelTooLarge { .. })
        ));
        assert!(SeparableBlur::new(&[0.5, 0.5], &[1.0], 3, 3, BoundaryCondition::Zero).is_err());
    }

    #[test]
    fn one_pixel_kronecker() {
        let b = SeparableBlur::new(&[1.0], &[1.0], 1, 1, BoundaryCondition::Zero).unwrap();
        assert_eq!(b.assemble_dense().unwrap().matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn kronecker_identity_on_small_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bc in ALL_BC {
            let b = SeparableBlur::new(
                &random_kernel(&mut rng, 1),
                &random_kernel(&mut rng, 3),
                3,
                2,
                bc,
            )
            .unwrap();
            let a = b.assemble_dense().unwrap();
            for _ in 0..100 {
                let x = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
                let lhs = vectorize(&b.apply(&x).unwrap());
                assert!((lhs - a.matrix() * vectorize(&x)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let b = SeparableBlur::new(&[1.0], &[1.0], 65, 64, BoundaryCondition::Zero).unwrap();
        assert!(matches!(
            b.assemble_dense(),
            Err(DeblurError::DenseCapExceeded { n: 4160, cap: 4096 })
        ));
    }

    #[test]
    fn row_sums_are_one_for_periodic_and_reflexive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Reflexive] {
            let b = SeparableBlur::new(
                &random_kernel(&mut rng, 5),
                &random_kernel(&mut rng, 3),
                6,
                8,
                bc,
            )
            .unwrap();
            for a in [b.row_matrix(), b.col_matrix()] {
                for r in a.row_iter() {
                    assert!((r.sum() - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn delta_spectra_are_ones() {
        let d = Psf::delta(3).unwrap();
        let f = bccb_spectrum(&d, 5, 6).unwrap();
        let c = dct_spectrum(&d, 5, 6).unwrap();
        if let Spectrum::Fourier(l) = f.spectrum() {
            assert!(l.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-14));
        }
        if let Spectrum::Cosine(l) = c.spectrum() {
            assert!(l.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn symmetric_psf_spectrum_is_conjugate_symmetric() {
        let p = gaussian_psf(3, 0.9, 0.9, 0.0).unwrap();
        let f = bccb_spectrum(&p, 6, 5).unwrap();
        let Spectrum::Fourier(l) = f.spectrum() else { unreachable!() };
        for u in 0..6 {
            for v in 0..5 {
                let mirror = l[((6 - u) % 6, (5 - v) % 5)];
                assert!((l[(u, v)] - mirror.conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dct_requires_double_symmetry() {
        let p = gaussian_psf(3, 0.9, 1.4, 0.5).unwrap();
        assert!(matches!(dct_spectrum(&p, 6, 6), Err(DeblurError::NotDoublySymmetric)));
    }

    #[test]
    fn dct_matrix_is_orthonormal() {
        let c = dct_matrix(7);
        assert!((c.transpose() * &c - DMatrix::identity(7, 7)).amax() < 1e-14);
    }

    #[test]
    fn condition_number_values() {
        assert_eq!(condition_number(&[1.0, 1.0]), 1.0);
        assert_eq!(condition_number(&[2.0, 0.0]), f64::INFINITY);
        let c = condition_number(&[3.92907, 1.76673e-5]);
        assert!((c - 222392.0).abs() < 1.0);
    }

    #[test]
    fn fourier_diagonalization_matches_periodic_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let kernel = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
        let psf = Psf::new(kernel).unwrap();
        let (m, n) = (6, 5);
        let diag = bccb_spectrum(&psf, m, n).unwrap();
        for _ in 0..5 {
            let x = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
            let direct = crate::imagegrid::convolve2d(&x, &psf, BoundaryCondition::Periodic).unwrap();
            assert!((diag.apply(&x).unwrap() - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn fourier_moduli_are_dense_singular_values() {
        let psf = gaussian_psf(3, 0.7, 1.1, 0.2).unwrap();
        let (m, n) = (5, 6);
        let dense = DenseOperator::from_psf(&psf, m, n, BoundaryCondition::Periodic).unwrap();
        let mut expected: Vec<f64> = dense.matrix().clone().svd(false, false).singular_values.iter().copied().collect();
        let mut got: Vec<f64> = bccb_spectrum(&psf, m, n).unwrap().moduli().iter().copied().collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        got.sort_by(|a, b| b.total_cmp(a));
        for (e, g) in expected.iter().zip(&got) {
            assert!((e - g).abs() < 1e-12, "{e} vs {g}");
        }
    }

    #[test]
    fn cosine_diagonalization_matches_reflexive_convolution() {
        let psf = gaussian_psf(5, 1.3, 0.9, 0.0).unwrap();
        let (m, n) = (7, 8);
        let diag = dct_spectrum(&psf, m, n).unwrap();
        let dense = DenseOperator::from_psf(&psf, m, n, BoundaryCondition::Reflexive).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
        assert!((diag.apply(&x).unwrap() - dense.apply_image(&x).unwrap()).amax() < 1e-12);
        // the reflexive matrix of a doubly symmetric PSF is symmetric, so its eigenvalues are the spectrum
        let eig = dense.matrix().clone().symmetric_eigen();
        let mut expected: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let Spectrum::Cosine(l) = diag.spectrum() else { panic!("cosine spectrum expected") };
        let mut got: Vec<f64> = l.iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (e, g) in expected.iter().zip(&got) {
            assert!((e - g).abs() < 1e-12, "{e} vs {g}");
        }
    }
}
