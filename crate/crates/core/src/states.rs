//! Density matrices, parametrized state families and their derivatives.

use crate::error::{QfimError, Result};
use crate::linalg::{
    c, commutator, ensure_finite, ensure_square, hermitian_deviation, hermitian_part, max_abs,
    require_hermitian, ComplexMatrix, HermitianEig,
};
use crate::random::traceless;

/// Allowed deviation of the trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Hermiticity / tracelessness tolerance for derivative matrices, relative
/// to `max(1, max|d rho|)`.
pub const DERIVATIVE_TOL: f64 = 1e-8;

/// A validated density matrix with its spectrum cached.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    spectrum: HermitianEig,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &HermitianEig {
        &self.spectrum
    }

    /// `dim * eps * lambda_max`
    pub fn tol_rank(&self) -> f64 {
        self.dim() as f64 * f64::EPSILON * self.spectrum.max()
    }

    pub fn rank(&self) -> usize {
        let tol = self.tol_rank();
        self.spectrum.values.iter().filter(|&&l| l > tol).count()
    }

    pub fn is_full_rank(&self) -> bool {
        self.spectrum.min() > self.tol_rank()
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        validate_density(&ComplexMatrix::identity(dim, dim).unscale(dim as f64))
            .expect("I/dim is a valid density matrix")
    }
}

/// Checks Hermiticity, unit trace and positivity, and returns the
/// symmetrized state.
pub fn validate_density(m: &ComplexMatrix) -> Result<DensityMatrix> {
    ensure_square(m, "density matrix")?;
    ensure_finite(m)?;
    let matrix = require_hermitian(m)?;
    let trace = matrix.trace().re;
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(QfimError::TraceNotOne { trace });
    }
    let spectrum = HermitianEig::of_unchecked(&matrix);
    if spectrum.min() < -PSD_TOL {
        return Err(QfimError::NotPositive {
            min_eigenvalue: spectrum.min(),
        });
    }
    Ok(DensityMatrix { matrix, spectrum })
}

/// `(1 - nu) rho + (nu / dim) I`, which is full rank for `0 < nu < 1`.
pub fn regularize(rho: &DensityMatrix, nu: f64) -> Result<DensityMatrix> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(QfimError::Domain(format!(
            "regularization parameter must lie in (0, 1), got {nu}"
        )));
    }
    let d = rho.dim();
    let shift = nu / d as f64;
    let matrix = rho.matrix.scale(1.0 - nu) + ComplexMatrix::identity(d, d).scale(shift);
    // same eigenvectors, eigenvalues move affinely
    let spectrum = HermitianEig {
        values: rho.spectrum.values.map(|l| (1.0 - nu) * l + shift),
        vectors: rho.spectrum.vectors.clone(),
    };
    Ok(DensityMatrix { matrix, spectrum })
}

/// Partial derivatives of rho with respect to each parameter.
#[derive(Debug, Clone)]
pub struct DerivativeSet {
    partials: Vec<ComplexMatrix>,
}

impl DerivativeSet {
    /// Validates that every partial is `dim x dim`, Hermitian and traceless,
    /// and stores the re-Hermitized, trace-projected matrices.
    pub fn new(partials: Vec<ComplexMatrix>, dim: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(partials.len());
        for (index, p) in partials.into_iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(QfimError::Dimension(format!(
                    "derivative {index} is {}x{}, expected {dim}x{dim}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            ensure_finite(&p)?;
            let scale = max_abs(&p).max(1.0);
            let deviation = hermitian_deviation(&p).max(p.trace().norm());
            if deviation > DERIVATIVE_TOL * scale {
                return Err(QfimError::BadDerivative { index, deviation });
            }
            out.push(project(&p));
        }
        Ok(DerivativeSet { partials: out })
    }

    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }

    pub fn partials(&self) -> &[ComplexMatrix] {
        &self.partials
    }

    pub fn scaled(&self, s: f64) -> DerivativeSet {
        DerivativeSet {
            partials: self.partials.iter().map(|p| p.scale(s)).collect(),
        }
    }

    /// `V d V^H` for every partial.
    pub fn conjugated(&self, v: &ComplexMatrix) -> DerivativeSet {
        DerivativeSet {
            partials: self
                .partials
                .iter()
                .map(|p| hermitian_part(&(v * p * v.adjoint())))
                .collect(),
        }
    }

    /// `sum_i d_i * weights[i]`
    pub fn combine(&self, weights: &[f64]) -> Result<ComplexMatrix> {
        if weights.len() != self.len() {
            return Err(QfimError::Dimension(format!(
                "{} weights for {} parameters",
                weights.len(),
                self.len()
            )));
        }
        let n = self.partials.first().map_or(0, |p| p.nrows());
        Ok(self
            .partials
            .iter()
            .zip(weights)
            .fold(ComplexMatrix::zeros(n, n), |acc, (p, &w)| acc + p.scale(w)))
    }
}

/// Hermitian part with the trace removed.
fn project(a: &ComplexMatrix) -> ComplexMatrix {
    traceless(&hermitian_part(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// A differentiable map from a real parameter vector to density matrices.
pub trait StateFamily: Send + Sync {
    fn n_params(&self) -> usize;

    fn dim(&self) -> usize;

    fn evaluate(&self, eps: &[f64]) -> Result<DensityMatrix>;

    /// `None` means the family has no closed-form derivatives at `eps`.
    fn analytic_derivatives(&self, _eps: &[f64]) -> Option<Result<DerivativeSet>> {
        None
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    fn derivatives(&self, eps: &[f64]) -> Result<DerivativeSet> {
        match self.analytic_derivatives(eps) {
            Some(d) => d,
            None => finite_difference_derivatives(self, eps),
        }
    }
}

/// A family defined by a closure returning the raw matrix.
pub struct FnFamily<F> {
    n_params: usize,
    dim: usize,
    f: F,
}

impl<F> FnFamily<F>
where
    F: Fn(&[f64]) -> ComplexMatrix + Send + Sync,
{
    pub fn new(n_params: usize, dim: usize, f: F) -> Self {
        FnFamily { n_params, dim, f }
    }
}

impl<F> StateFamily for FnFamily<F>
where
    F: Fn(&[f64]) -> ComplexMatrix + Send + Sync,
{
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, eps: &[f64]) -> Result<DensityMatrix> {
        validate_density(&(self.f)(eps))
    }
}

fn check_param_len<F: StateFamily + ?Sized>(family: &F, eps: &[f64]) -> Result<()> {
    if eps.len() != family.n_params() {
        return Err(QfimError::Dimension(format!(
            "family takes {} parameters, got {}",
            family.n_params(),
            eps.len()
        )));
    }
    Ok(())
}

/// Central differences with step `cbrt(eps) * max(1, |eps_i|)`.
pub fn finite_difference_derivatives<F: StateFamily + ?Sized>(
    family: &F,
    eps: &[f64],
) -> Result<DerivativeSet> {
    check_param_len(family, eps)?;
    let mut partials = Vec::with_capacity(eps.len());
    let mut shifted = eps.to_vec();
    for i in 0..eps.len() {
        let h = f64::EPSILON.cbrt() * eps[i].abs().max(1.0);
        let wrap = |e: QfimError| QfimError::Evaluation {
            index: i,
            source: Box::new(e),
        };
        shifted[i] = eps[i] + h;
        let plus = family.evaluate(&shifted).map_err(wrap)?;
        shifted[i] = eps[i] - h;
        let minus = family.evaluate(&shifted).map_err(wrap)?;
        shifted[i] = eps[i];
        // the actual step, after rounding eps +- h
        let width = (eps[i] + h) - (eps[i] - h);
        let diff = (plus.matrix() - minus.matrix()).unscale(width);
        partials.push(project(&diff));
    }
    Ok(DerivativeSet { partials })
}

/// Parameters encoded as `rho = U rho0 U^H` with
/// `U = exp(-i sum_j K_j eps_j)`.
#[derive(Debug, Clone)]
pub struct UnitaryEncoding {
    generators: Vec<ComplexMatrix>,
    initial_state: DensityMatrix,
}

/// Commutators at or below this (relative to `max(1, max|K|^2)`) count as
/// zero.
pub const COMMUTE_TOL: f64 = 1e-10;

impl UnitaryEncoding {
    pub fn new(generators: Vec<ComplexMatrix>, initial_state: DensityMatrix) -> Result<Self> {
        if generators.is_empty() {
            return Err(QfimError::Domain(
                "at least one generator is required".into(),
            ));
        }
        let d = initial_state.dim();
        let generators = generators
            .iter()
            .enumerate()
            .map(|(j, k)| {
                if k.nrows() != d || k.ncols() != d {
                    return Err(QfimError::Dimension(format!(
                        "generator {j} is {}x{}, state is {d}x{d}",
                        k.nrows(),
                        k.ncols()
                    )));
                }
                require_hermitian(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitaryEncoding {
            generators,
            initial_state,
        })
    }

    pub fn generators(&self) -> &[ComplexMatrix] {
        &self.generators
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    /// Largest `max|[K_i, K_j]|` over all pairs.
    pub fn max_commutator(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.generators.len() {
            for j in (i + 1)..self.generators.len() {
                worst = worst.max(max_abs(&commutator(
                    &self.generators[i],
                    &self.generators[j],
                )));
            }
        }
        worst
    }

    pub fn commuting(&self) -> bool {
        let scale = self.generators.iter().map(max_abs).fold(1.0f64, f64::max);
        self.max_commutator() <= COMMUTE_TOL * scale * scale
    }

    /// `-i [K_j, rho0]` for every generator: the derivatives at `eps = 0`.
    pub fn commutator_derivatives(&self) -> DerivativeSet {
        DerivativeSet {
            partials: self
                .generators
                .iter()
                .map(|k| {
                    hermitian_part(&(commutator(k, self.initial_state.matrix()) * c(0.0, -1.0)))
                })
                .collect(),
        }
    }

    /// `exp(-i sum_j K_j eps_j)`, exponentiated spectrally.
    pub fn unitary(&self, eps: &[f64]) -> Result<ComplexMatrix> {
        check_param_len(self, eps)?;
        let d = self.dim();
        let g = self
            .generators
            .iter()
            .zip(eps)
            .fold(ComplexMatrix::zeros(d, d), |acc, (k, &e)| acc + k.scale(e));
        let eig = HermitianEig::of_unchecked(&hermitian_part(&g));
        Ok(eig.map(|l| c(0.0, -l).exp()))
    }
}

impl StateFamily for UnitaryEncoding {
    fn n_params(&self) -> usize {
        self.generators.len()
    }

    fn dim(&self) -> usize {
        self.initial_state.dim()
    }

    fn evaluate(&self, eps: &[f64]) -> Result<DensityMatrix> {
        let u = self.unitary(eps)?;
        validate_density(&(&u * self.initial_state.matrix() * u.adjoint()))
    }

    /// Closed form `U (-i[K_i, rho0]) U^H`, valid when the generators commute.
    fn analytic_derivatives(&self, eps: &[f64]) -> Option<Result<DerivativeSet>> {
        if !self.commuting() {
            return None;
        }
        Some(
            self.unitary(eps)
                .map(|u| self.commutator_derivatives().conjugated(&u)),
        )
    }

    fn derivative_mode(&self) -> DerivativeMode {
        if self.commuting() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference
        }
    }
}

/// The encoded state at `eps` and its parameter derivatives.
pub fn encode_unitary(
    enc: &UnitaryEncoding,
    eps: &[f64],
) -> Result<(DensityMatrix, DerivativeSet)> {
    check_param_len(enc, eps)?;
    let rho = enc.evaluate(eps)?;
    let d = enc.derivatives(eps)?;
    Ok((rho, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{bell_phase_encoding, PhaseNoiseQubit};
    use crate::linalg::{c, hermitian_eig, MaxModulus};
    use crate::random::Ensemble;

    fn diag(v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(v.len(), v.len(), |i, j| {
            if i == j {
                c(v[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    #[test]
    fn validate_examples() {
        let mixed = validate_density(&diag(&[0.5, 0.5])).unwrap();
        assert!(mixed.is_full_rank());
        let pure = validate_density(&diag(&[1.0, 0.0])).unwrap();
        assert!(!pure.is_full_rank());
        assert_eq!(pure.rank(), 1);
        match validate_density(&diag(&[0.6, 0.6])) {
            Err(QfimError::TraceNotOne { trace }) => assert!((trace - 1.2).abs() < 1e-15),
            other => panic!("expected trace error, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_negative_and_non_hermitian() {
        match validate_density(&diag(&[1.1, -0.1])) {
            Err(QfimError::NotPositive { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.1).abs() < 1e-12)
            }
            other => panic!("expected NotPositive, got {other:?}"),
        }
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(
            validate_density(&m),
            Err(QfimError::NotHermitian { .. })
        ));
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            validate_density(&rect),
            Err(QfimError::Dimension(_))
        ));
    }

    #[test]
    fn regularize_examples() {
        let pure = validate_density(&diag(&[1.0, 0.0])).unwrap();
        let r = regularize(&pure, 0.5).unwrap();
        assert!((r.matrix() - diag(&[0.75, 0.25])).max_modulus() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(2);
        for nu in [0.1, 0.5, 0.99] {
            let r = regularize(&mixed, nu).unwrap();
            assert!((r.matrix() - diag(&[0.5, 0.5])).max_modulus() < 1e-15);
        }
        for nu in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(regularize(&pure, nu), Err(QfimError::Domain(_))));
        }
    }

    #[test]
    fn regularize_bell_state_matches_displayed_matrix() {
        let enc = bell_phase_encoding();
        let nu = 0.3;
        let r = regularize(enc.initial_state(), nu).unwrap();
        let (a, b, off) = (1.0 - nu / 2.0, nu / 2.0, 1.0 - nu);
        let expected = ComplexMatrix::from_row_slice(
            4,
            4,
            &[
                c(a, 0.),
                c(0., 0.),
                c(0., 0.),
                c(off, 0.),
                c(0., 0.),
                c(b, 0.),
                c(0., 0.),
                c(0., 0.),
                c(0., 0.),
                c(0., 0.),
                c(b, 0.),
                c(0., 0.),
                c(off, 0.),
                c(0., 0.),
                c(0., 0.),
                c(a, 0.),
            ],
        )
        .scale(0.5);
        assert!((r.matrix() - expected).max_modulus() < 1e-15);
    }

    #[test]
    fn regularize_cached_spectrum_is_consistent() {
        let mut ens = Ensemble::new(2);
        let rho = validate_density(&ens.density(5)).unwrap();
        let r = regularize(&rho, 0.01).unwrap();
        assert!((r.spectrum().reconstruct() - r.matrix()).max_modulus() < 1e-13);
    }

    #[test]
    fn finite_differences_examples() {
        let constant = FnFamily::new(1, 2, |_e: &[f64]| diag(&[0.3, 0.7]));
        let d = finite_difference_derivatives(&constant, &[0.4]).unwrap();
        assert_eq!(d.partials()[0].max_modulus(), 0.0);

        let linear = FnFamily::new(1, 2, |e: &[f64]| diag(&[0.5 + e[0], 0.5 - e[0]]));
        let d = finite_difference_derivatives(&linear, &[0.0]).unwrap();
        assert!((&d.partials()[0] - diag(&[1.0, -1.0])).max_modulus() < 1e-9);

        let family = PhaseNoiseQubit;
        let fd = finite_difference_derivatives(&family, &[0.3, 0.2]).unwrap();
        let exact = family.analytic_derivatives(&[0.3, 0.2]).unwrap().unwrap();
        for (a, b) in fd.partials().iter().zip(exact.partials()) {
            assert!((a - b).max_modulus() < 1e-8);
        }
    }

    #[test]
    fn finite_differences_report_failing_parameter() {
        // leaves the PSD cone when eps[1] moves below zero
        let family = FnFamily::new(2, 2, |e: &[f64]| diag(&[1.0 - e[1], e[1]]));
        match finite_difference_derivatives(&family, &[0.0, 0.0]) {
            Err(QfimError::Evaluation { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected evaluation failure, got {other:?}"),
        }
    }

    #[test]
    fn derivative_set_rejects_bad_partials() {
        let not_traceless = diag(&[1.0, 0.0]);
        assert!(matches!(
            DerivativeSet::new(vec![not_traceless], 2),
            Err(QfimError::BadDerivative { index: 0, .. })
        ));
        let mut skew = ComplexMatrix::zeros(2, 2);
        skew[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(
            DerivativeSet::new(vec![diag(&[1.0, -1.0]), skew], 2),
            Err(QfimError::BadDerivative { index: 1, .. })
        ));
        assert!(matches!(
            DerivativeSet::new(vec![ComplexMatrix::zeros(3, 3)], 2),
            Err(QfimError::Dimension(_))
        ));
    }

    #[test]
    fn encode_unitary_at_origin_gives_commutators() {
        let mut ens = Ensemble::new(4);
        let rho0 = validate_density(&ens.density(3)).unwrap();
        let k = ens.hermitian(3);
        let enc = UnitaryEncoding::new(vec![k.clone()], rho0.clone()).unwrap();
        let (rho, d) = encode_unitary(&enc, &[0.0]).unwrap();
        assert!((rho.matrix() - rho0.matrix()).max_modulus() < 1e-14);
        let expected = commutator(&k, rho0.matrix()) * c(0.0, -1.0);
        assert!((&d.partials()[0] - expected).max_modulus() < 1e-14);
    }

    #[test]
    fn encode_unitary_identity_state_has_zero_derivative() {
        let k = diag(&[0.0, 1.0]);
        let enc = UnitaryEncoding::new(vec![k], DensityMatrix::maximally_mixed(2)).unwrap();
        let (_, d) = encode_unitary(&enc, &[0.7]).unwrap();
        assert!(d.partials()[0].max_modulus() < 1e-15);
    }

    #[test]
    fn bell_commutator_matches_displayed_matrix() {
        let enc = bell_phase_encoding();
        let nu = 0.2;
        let r = regularize(enc.initial_state(), nu).unwrap();
        let comm = commutator(&enc.generators()[0], r.matrix());
        let mut expected = ComplexMatrix::zeros(4, 4);
        expected[(0, 3)] = c(nu - 1.0, 0.0);
        expected[(3, 0)] = c(1.0 - nu, 0.0);
        assert!((comm - expected).max_modulus() < 1e-15);
    }

    #[test]
    fn encode_unitary_rejects_wrong_parameter_count() {
        let enc = bell_phase_encoding();
        assert!(matches!(
            encode_unitary(&enc, &[0.1, 0.2]),
            Err(QfimError::Dimension(_))
        ));
    }

    #[test]
    fn commuting_derivatives_transport_with_u() {
        let mut ens = Ensemble::new(8);
        let v = ens.unitary(4);
        let gens: Vec<_> = (0..2)
            .map(|_| {
                let d: Vec<f64> = (0..4).map(|_| ens.normal()).collect();
                &v * diag(&d) * v.adjoint()
            })
            .collect();
        let rho0 = validate_density(&ens.density(4)).unwrap();
        let enc = UnitaryEncoding::new(gens, rho0).unwrap();
        assert!(enc.commuting());
        let eps = [0.4, -1.3];
        let u = enc.unitary(&eps).unwrap();
        let (_, d) = encode_unitary(&enc, &eps).unwrap();
        let (_, d0) = encode_unitary(&enc, &[0.0, 0.0]).unwrap();
        for (di, d0i) in d.partials().iter().zip(d0.partials()) {
            assert!((di - &u * d0i * u.adjoint()).max_modulus() < 1e-10);
        }
        // and against finite differences
        let fd = finite_difference_derivatives(&enc, &eps).unwrap();
        for (a, b) in d.partials().iter().zip(fd.partials()) {
            assert!((a - b).max_modulus() < 1e-6);
        }
    }

    #[test]
    fn non_commuting_generators_fall_back_to_finite_differences() {
        let x = ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let z = diag(&[1.0, -1.0]);
        let rho0 = validate_density(&diag(&[0.8, 0.2])).unwrap();
        let enc = UnitaryEncoding::new(vec![x, z], rho0).unwrap();
        assert!(!enc.commuting());
        assert_eq!(enc.derivative_mode(), DerivativeMode::FiniteDifference);
        let (rho, d) = encode_unitary(&enc, &[0.1, 0.2]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(hermitian_eig(rho.matrix()).is_ok());
    }
}
