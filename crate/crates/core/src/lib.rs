//! Quantum Fisher information matrices for finite-dimensional density
//! matrices, including rank-deficient states.
//!
//! The central route solves the symmetric-logarithmic-derivative equation in
//! vectorized form, `vec(L) = 2 M^{-1} vec(d rho)` with
//! `M = conj(rho) (x) I + I (x) rho`. Five other routes (spectral sum,
//! spectral matrix form, integral, regularized limit, pseudoinverse) serve
//! as mutual oracles and cover singular states.
//!
//! ```
//! use qfim::families::PhaseNoiseQubit;
//! use qfim::solvers::{compute, MethodChoice};
//! use qfim::states::StateFamily;
//!
//! let rho = PhaseNoiseQubit.evaluate(&[0.3, 0.5]).unwrap();
//! let d = PhaseNoiseQubit.derivatives(&[0.3, 0.5]).unwrap();
//! let h = compute(&rho, &d, &MethodChoice::default()).unwrap().h;
//! assert!((h[(0, 0)] - 0.25).abs() < 1e-12);
//! assert!((h[(1, 1)] - 4.0 / 3.0).abs() < 1e-12);
//! ```

pub mod bench;
pub mod error;
pub mod families;
pub mod format;
pub mod linalg;
pub mod metrology;
pub mod quadrature;
pub mod random;
pub mod solvers;
pub mod states;

pub use error::{QfimError, Result};
pub use linalg::{ComplexMatrix, ComplexVector, RealMatrix};
pub use metrology::{cramer_rao, optimal_bases, CrbReport};
pub use solvers::{compare_methods, compute, compute_encoding, Method, MethodChoice, QfimResult};
pub use states::{DensityMatrix, DerivativeSet, StateFamily, UnitaryEncoding};
