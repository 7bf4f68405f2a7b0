use thiserror::Error;

use crate::linalg::RealMatrix;

pub type Result<T, E = QfimError> = std::result::Result<T, E>;

/// One step of a regularized-limit sweep, kept so a failed sweep can be
/// inspected.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NuIterate {
    pub nu: f64,
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum QfimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not Hermitian: max |A - A^H| = {max_deviation:.3e}")]
    NotHermitian { max_deviation: f64 },

    #[error("trace is {trace} (expected 1 within 1e-10)")]
    TraceNotOne { trace: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("derivative {index} is not Hermitian and traceless: deviation {deviation:.3e}")]
    BadDerivative { index: usize, deviation: f64 },

    #[error("singular matrix (smallest pivot {pivot:.3e}): {advice}")]
    Singular { pivot: f64, advice: &'static str },

    #[error("integrand does not decay: smallest eigenvalue of rho is {lambda_min:.3e}")]
    Divergence { lambda_min: f64 },

    #[error("regularized limit did not converge after {} steps (last nu = {:.1e})", .history.len(), .history.last().map_or(f64::NAN, |it| it.nu))]
    Convergence { history: Vec<NuIterate> },

    #[error("generators do not commute: max |[K_i, K_j]| = {max_commutator:.3e}")]
    NonCommuting { max_commutator: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state evaluation failed while shifting parameter {index}: {source}")]
    Evaluation {
        index: usize,
        #[source]
        source: Box<QfimError>,
    },
}

impl QfimError {
    pub(crate) fn history_from(iterates: &[(f64, RealMatrix)]) -> Self {
        QfimError::Convergence {
            history: iterates
                .iter()
                .map(|(nu, h)| NuIterate {
                    nu: *nu,
                    h: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }
}
