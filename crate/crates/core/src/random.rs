//! Seeded random matrix ensembles.
//!
//! Densities are `G G^H / tr(G G^H)` with `G` filled with i.i.d. standard
//! complex Gaussians, which is full rank almost surely. Derivatives are
//! Hermitian traceless Gaussians.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, commutator, hermitian_part, ComplexMatrix, ComplexVector};

pub struct Ensemble {
    rng: ChaCha8Rng,
}

impl Ensemble {
    pub fn new(seed: u64) -> Self {
        Ensemble {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        rand::Rng::random_range(&mut self.rng, 0..n)
    }

    /// Real and imaginary parts each N(0, 1/2).
    pub fn complex_normal(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        c(s * self.normal(), s * self.normal())
    }

    pub fn complex_matrix(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        // fill column by column so the draw order is independent of nalgebra
        let mut m = ComplexMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = self.complex_normal();
            }
        }
        m
    }

    pub fn complex_vector(&mut self, n: usize) -> ComplexVector {
        ComplexVector::from_iterator(n, (0..n).map(|_| self.complex_normal()))
    }

    pub fn hermitian(&mut self, n: usize) -> ComplexMatrix {
        hermitian_part(&self.complex_matrix(n, n))
    }

    /// `G G^H + I / 10`
    pub fn hpd_matrix(&mut self, n: usize) -> ComplexMatrix {
        let g = self.complex_matrix(n, n);
        &g * g.adjoint() + ComplexMatrix::identity(n, n).scale(0.1)
    }

    pub fn density(&mut self, n: usize) -> ComplexMatrix {
        let g = self.complex_matrix(n, n);
        let w = &g * g.adjoint();
        let tr = w.trace().re;
        w.unscale(tr)
    }

    /// Hermitian traceless Gaussian.
    pub fn derivative(&mut self, n: usize) -> ComplexMatrix {
        traceless(&self.hermitian(n))
    }

    /// Haar-distributed unitary from the QR decomposition of a Gaussian
    /// matrix with the phases of `R`'s diagonal divided out.
    pub fn unitary(&mut self, n: usize) -> ComplexMatrix {
        let qr = self.complex_matrix(n, n).qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..n {
            let d = r[(k, k)];
            let phase = if d.norm() > 0.0 {
                d / d.norm()
            } else {
                c(1.0, 0.0)
            };
            for i in 0..n {
                q[(i, k)] *= phase;
            }
        }
        q
    }

    /// Random probability vector with `rank` strictly positive entries
    /// followed by zeros.
    pub fn spectrum(&mut self, n: usize, rank: usize) -> DVector<f64> {
        let mut p = DVector::zeros(n);
        for k in 0..rank {
            p[k] = 0.05 + self.uniform();
        }
        let s = p.sum();
        p / s
    }

    /// A density of the given rank together with `n_params` derivatives that
    /// are tangent to the set of states of that rank: a unitary part
    /// `-i[K, rho]` plus a traceless Hermitian perturbation supported on the
    /// range of `rho`.
    pub fn rank_deficient_instance(
        &mut self,
        n: usize,
        rank: usize,
        n_params: usize,
    ) -> (ComplexMatrix, Vec<ComplexMatrix>) {
        let v = self.unitary(n);
        let p = self.spectrum(n, rank);
        let diag = ComplexMatrix::from_diagonal(&p.map(|x| c(x, 0.0)));
        let rho = hermitian_part(&(&v * diag * v.adjoint()));
        let derivs = (0..n_params)
            .map(|_| {
                let k = self.hermitian(n);
                let unitary_part = commutator(&k, &rho) * c(0.0, -1.0);
                let mut block = ComplexMatrix::zeros(n, n);
                let h = traceless(&self.hermitian(rank));
                block.view_mut((0, 0), (rank, rank)).copy_from(&h);
                let support_part = &v * block * v.adjoint();
                hermitian_part(&(unitary_part + support_part))
            })
            .collect();
        (rho, derivs)
    }
}

pub fn traceless(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.nrows();
    let shift = a.trace() / n as f64;
    a - ComplexMatrix::identity(n, n) * shift
}
