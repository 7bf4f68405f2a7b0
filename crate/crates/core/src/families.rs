//! Built-in state families with analytic derivatives.

use crate::error::{QfimError, Result};
use crate::linalg::{c, ComplexMatrix};
use crate::states::{
    validate_density, DensityMatrix, DerivativeMode, DerivativeSet, StateFamily, UnitaryEncoding,
};

/// Qubit phase state `(|0> + e^{-i theta}|1>)/sqrt 2` mixed with white noise
/// of strength `nu`:
///
/// ```text
/// rho = (1 - nu)|psi><psi| + nu I/2
///     = 1/2 [[1, (1-nu) e^{i theta}], [(1-nu) e^{-i theta}, 1]]
/// ```
///
/// Parameters are `(theta, nu)` with `nu` in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseNoiseQubit;

impl PhaseNoiseQubit {
    fn check(eps: &[f64]) -> Result<(f64, f64)> {
        match *eps {
            [theta, nu] if (0.0..=1.0).contains(&nu) => Ok((theta, nu)),
            [_, nu] => Err(QfimError::Domain(format!(
                "noise parameter must lie in [0, 1], got {nu}"
            ))),
            _ => Err(QfimError::Dimension(format!(
                "phase-noise-qubit takes (theta, nu), got {} values",
                eps.len()
            ))),
        }
    }
}

impl StateFamily for PhaseNoiseQubit {
    fn n_params(&self) -> usize {
        2
    }

    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, eps: &[f64]) -> Result<DensityMatrix> {
        let (theta, nu) = Self::check(eps)?;
        let off = c(0.0, theta).exp() * (1.0 - nu);
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), off, off.conj(), c(1.0, 0.0)]);
        validate_density(&m.scale(0.5))
    }

    fn analytic_derivatives(&self, eps: &[f64]) -> Option<Result<DerivativeSet>> {
        Some(Self::check(eps).and_then(|(theta, nu)| {
            let phase = c(0.0, theta).exp();
            let zero = c(0.0, 0.0);
            let d_theta_off = c(0.0, 0.5 * (1.0 - nu)) * phase;
            let d_theta =
                ComplexMatrix::from_row_slice(2, 2, &[zero, d_theta_off, d_theta_off.conj(), zero]);
            let d_nu_off = phase * -0.5;
            let d_nu =
                ComplexMatrix::from_row_slice(2, 2, &[zero, d_nu_off, d_nu_off.conj(), zero]);
            DerivativeSet::new(vec![d_theta, d_nu], 2)
        }))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }
}

/// Bell state `(|00> + |11>)/sqrt 2` with a phase imprinted by the total
/// number operator `K = N (x) I + I (x) N = diag(0, 1, 1, 2)`.
pub fn bell_phase_encoding() -> UnitaryEncoding {
    let mut k = ComplexMatrix::zeros(4, 4);
    for (i, n) in [0.0, 1.0, 1.0, 2.0].into_iter().enumerate() {
        k[(i, i)] = c(n, 0.0);
    }
    let mut rho0 = ComplexMatrix::zeros(4, 4);
    for &i in &[0, 3] {
        for &j in &[0, 3] {
            rho0[(i, j)] = c(0.5, 0.0);
        }
    }
    let rho0 = validate_density(&rho0).expect("Bell state is a valid density matrix");
    UnitaryEncoding::new(vec![k], rho0).expect("number operator is Hermitian")
}

/// Named built-in families addressable from problem files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    PhaseNoiseQubit,
    BellPhase,
}

impl Builtin {
    pub const ALL: [Builtin; 2] = [Builtin::PhaseNoiseQubit, Builtin::BellPhase];

    pub fn from_id(id: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.id() == id)
    }

    pub fn id(self) -> &'static str {
        match self {
            Builtin::PhaseNoiseQubit => "phase-noise-qubit",
            Builtin::BellPhase => "bell-phase",
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Builtin::PhaseNoiseQubit => &["theta", "nu"],
            Builtin::BellPhase => &["theta"],
        }
    }
}
