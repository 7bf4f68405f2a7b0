//! Dense complex linear-algebra kernels.
//!
//! Matrices are nalgebra `DMatrix<Complex64>`, which stores entries in
//! column-major order. That makes [`vectorize`] a plain copy of the storage.

use nalgebra::{DMatrix, DVector, Dim, Matrix, RawStorage, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{QfimError, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;
pub type RealMatrix = DMatrix<f64>;

/// Relative Hermiticity tolerance, scaled by the largest entry magnitude.
pub const HERMITIAN_RTOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entry magnitude.
pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.max_modulus()
}

/// Largest entry modulus of any complex matrix or vector, including views.
pub trait MaxModulus {
    fn max_modulus(&self) -> f64;
}

impl<R: Dim, C: Dim, S: RawStorage<Complex64, R, C>> MaxModulus for Matrix<Complex64, R, C, S> {
    fn max_modulus(&self) -> f64 {
        self.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

pub fn max_abs_real(a: &RealMatrix) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn ensure_finite(a: &ComplexMatrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(QfimError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn ensure_square(a: &ComplexMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(QfimError::Dimension(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// max |A - A^H|.
pub fn hermitian_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// (A + A^H) / 2
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Checks Hermiticity within `1e-10 * max|A|` and returns the symmetrized
/// matrix.
pub fn require_hermitian(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(a, "matrix")?;
    ensure_finite(a)?;
    let dev = hermitian_deviation(a);
    if dev > HERMITIAN_RTOL * max_abs(a) {
        return Err(QfimError::NotHermitian { max_deviation: dev });
    }
    Ok(hermitian_part(a))
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// Stacks the columns of `a`, first column first.
pub fn vectorize(a: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vectorize`] for square `n x n` matrices.
pub fn unvectorize(v: &ComplexVector, n: usize) -> Result<ComplexMatrix> {
    if n == 0 || v.len() != n * n {
        return Err(QfimError::Dimension(format!(
            "cannot reshape a vector of length {} into a {n}x{n} matrix",
            v.len()
        )));
    }
    Ok(ComplexMatrix::from_column_slice(n, n, v.as_slice()))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = ComplexMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == Complex64::ZERO {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Spectral decomposition `A = U diag(values) U^H` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub values: DVector<f64>,
    /// Unitary; column `k` belongs to `values[k]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    /// Decomposes without validating Hermiticity; the strictly lower
    /// triangle is ignored by the solver.
    pub(crate) fn of_unchecked(a: &ComplexMatrix) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = ComplexMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        HermitianEig { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// `U diag(f(lambda)) U^H`
    pub fn map<F: Fn(f64) -> Complex64>(&self, f: F) -> ComplexMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                scaled[(i, k)] *= fk;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| c(l, 0.0))
    }

    /// `exp(s A)`
    pub fn exp_scaled(&self, s: f64) -> ComplexMatrix {
        self.map(|l| c((s * l).exp(), 0.0))
    }
}

pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig> {
    let sym = require_hermitian(a)?;
    Ok(HermitianEig::of_unchecked(&sym))
}

/// Lower-triangular factor of a Hermitian positive definite matrix,
/// `M = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: ComplexMatrix,
}

impl Cholesky {
    /// Fails when a pivot drops to `n * eps * max diag` or below.
    pub fn factor(m: &ComplexMatrix) -> Result<Self> {
        let n = ensure_square(m, "system matrix")?;
        let scale = (0..n).fold(0.0f64, |s, i| s.max(m[(i, i)].re.abs()));
        let floor = n as f64 * f64::EPSILON * scale;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            // written negated so a NaN pivot is rejected too
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let bad = !(d > floor);
            if bad {
                return Err(QfimError::Singular {
                    pivot: d,
                    advice: "matrix is not positive definite",
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = c(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, rhs: &ComplexVector) -> Result<ComplexVector> {
        let n = self.l.nrows();
        if rhs.len() != n {
            return Err(QfimError::Dimension(format!(
                "right-hand side has length {}, system has {n} rows",
                rhs.len()
            )));
        }
        // L y = b
        let mut y = rhs.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        // L^H x = y
        let mut x = y;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }
}

/// Solves `M x = rhs` for Hermitian positive definite `M` by Cholesky
/// factorization.
pub fn solve_hpd(m: &ComplexMatrix, rhs: &ComplexVector) -> Result<ComplexVector> {
    Cholesky::factor(m)?.solve(rhs)
}

/// Moore-Penrose pseudoinverse of a Hermitian PSD matrix, held in spectral
/// form so it can be applied to several right-hand sides.
#[derive(Debug, Clone)]
pub struct SpectralPseudoinverse {
    eig: HermitianEig,
    cutoff: f64,
}

impl SpectralPseudoinverse {
    /// Eigenvalues at or below `dim * eps * lambda_max` are treated as zero.
    pub fn new(m: &ComplexMatrix) -> Self {
        let eig = HermitianEig::of_unchecked(&hermitian_part(m));
        let rtol = eig.dim() as f64 * f64::EPSILON;
        let cutoff = rtol * eig.max().max(0.0);
        SpectralPseudoinverse { eig, cutoff }
    }

    pub fn rank(&self) -> usize {
        self.eig.values.iter().filter(|&&l| l > self.cutoff).count()
    }

    pub fn apply(&self, rhs: &ComplexVector) -> ComplexVector {
        let u = &self.eig.vectors;
        let mut coeffs = u.adjoint() * rhs;
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let l = self.eig.values[k];
            if l > self.cutoff {
                *ck /= l;
            } else {
                *ck = Complex64::ZERO;
            }
        }
        u * coeffs
    }
}

pub fn pseudoinverse_apply(m: &ComplexMatrix, rhs: &ComplexVector) -> ComplexVector {
    SpectralPseudoinverse::new(m).apply(rhs)
}

/// `exp(A)` for Hermitian `A`.
pub fn matrix_exp(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(hermitian_eig(a)?.exp_scaled(1.0))
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut s = Complex64::ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}
