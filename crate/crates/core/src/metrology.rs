//! Cramér-Rao bound analysis.
//!
//! `Cov(eps_hat) >= H^{-1}` means `Cov - H^{-1}` is positive semidefinite.
//! For two parameters that is exactly the three scalar conditions
//!
//! ```text
//! Var(a) >= (H^-1)_aa
//! Var(b) >= (H^-1)_bb
//! (Cov(a,b) - (H^-1)_ab)^2 <= (Var(a) - (H^-1)_aa)(Var(b) - (H^-1)_bb)
//! ```
//!
//! For more parameters the diagonal floors are emitted together with the
//! leading principal minor conditions of order two and up.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{hermitian_eig, ComplexMatrix, ComplexVector, RealMatrix};
use crate::solvers::{rows, QfimResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Constraint {
    /// `Var(p) >= bound`
    VarianceFloor { parameter: usize, bound: f64 },
    /// `(Cov(i,j) - offset)^2 <= (Var(i) - floor_i)(Var(j) - floor_j)`
    CovarianceProduct {
        i: usize,
        j: usize,
        offset: f64,
        floor_i: f64,
        floor_j: f64,
    },
    /// `det[(Cov - H^-1)_{0..order, 0..order}] >= 0`
    LeadingMinor {
        order: usize,
        h_inverse_block: Vec<Vec<f64>>,
    },
}

impl Constraint {
    /// Whether `cov` satisfies the inequality, allowing a slack of `tol`.
    pub fn holds(&self, cov: &RealMatrix, tol: f64) -> bool {
        match self {
            Constraint::VarianceFloor { parameter, bound } => {
                cov[(*parameter, *parameter)] - bound >= -tol
            }
            Constraint::CovarianceProduct {
                i,
                j,
                offset,
                floor_i,
                floor_j,
            } => {
                let lhs = (cov[(*i, *j)] - offset).powi(2);
                let rhs = (cov[(*i, *i)] - floor_i) * (cov[(*j, *j)] - floor_j);
                lhs <= rhs + tol
            }
            Constraint::LeadingMinor {
                order,
                h_inverse_block,
            } => {
                let k = *order;
                let block = RealMatrix::from_fn(k, k, |a, b| cov[(a, b)] - h_inverse_block[a][b]);
                block.determinant() >= -tol
            }
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        match self {
            Constraint::VarianceFloor { parameter, bound } => {
                format!("Var({}) >= {}", names[*parameter], fmt_num(*bound))
            }
            Constraint::CovarianceProduct {
                i,
                j,
                offset,
                floor_i,
                floor_j,
            } => {
                let (a, b) = (&names[*i], &names[*j]);
                let cov = if *offset == 0.0 {
                    format!("Cov({a},{b})^2")
                } else {
                    format!("(Cov({a},{b}) - {})^2", fmt_num(*offset))
                };
                format!(
                    "{cov} <= (Var({a}) - {})(Var({b}) - {})",
                    fmt_num(*floor_i),
                    fmt_num(*floor_j)
                )
            }
            Constraint::LeadingMinor {
                order,
                h_inverse_block,
            } => {
                let mut s = format!(
                    "det[Cov - H^-1]_({}) >= 0 with H^-1 block [",
                    names[..*order].join(",")
                );
                for (r, row) in h_inverse_block.iter().enumerate() {
                    if r > 0 {
                        s.push_str("; ");
                    }
                    let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
                    let _ = write!(s, "{}", cells.join(", "));
                }
                s.push(']');
                s
            }
        }
    }
}

/// Rounds to 12 significant digits and prints the shortest decimal.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let digits = 12 - 1 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits.clamp(-300, 300));
    let rounded = (x * scale).round() / scale;
    format!("{rounded}")
}

#[derive(Debug, Clone, Serialize)]
pub struct CrbReport {
    pub parameter_names: Vec<String>,
    /// Inverse of H, or its pseudoinverse on the identifiable subspace.
    pub h_inverse: Vec<Vec<f64>>,
    pub variance_floors: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub rendered: Vec<String>,
    pub invertible: bool,
    /// Orthonormal basis of parameter combinations H carries no
    /// information about.
    pub unidentifiable: Vec<Vec<f64>>,
    #[serde(skip)]
    pub optimal_bases: Option<Vec<Vec<ComplexVector>>>,
}

impl CrbReport {
    pub fn h_inverse_matrix(&self) -> RealMatrix {
        let n = self.h_inverse.len();
        RealMatrix::from_fn(n, n, |i, j| self.h_inverse[i][j])
    }
}

/// Builds the bound from a QFIM. Eigenvalues of H at or below
/// `n * eps * lambda_max` mark unidentifiable directions; the bound is then
/// reported on the remaining subspace.
pub fn cramer_rao(result: &QfimResult, names: &[String]) -> Result<CrbReport> {
    let h = &result.h;
    let n = h.nrows();
    let names: Vec<String> = (0..n)
        .map(|i| names.get(i).cloned().unwrap_or_else(|| format!("p{i}")))
        .collect();
    let eig = SymmetricEigen::new(h.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * lmax;
    let invertible = lmax > 0.0 && eig.eigenvalues.iter().all(|&l| l > tol);

    let h_inv = if invertible {
        h.clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| spectral_inverse(&eig, tol))
    } else {
        spectral_inverse(&eig, tol)
    };
    let h_inv = (&h_inv + h_inv.transpose()) * 0.5;
    let unidentifiable = (0..n)
        .filter(|&k| eig.eigenvalues[k] <= tol)
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();

    let floors: Vec<f64> = (0..n).map(|i| h_inv[(i, i)].max(0.0)).collect();
    let mut constraints: Vec<Constraint> = floors
        .iter()
        .enumerate()
        .map(|(parameter, &bound)| Constraint::VarianceFloor { parameter, bound })
        .collect();
    if n == 2 {
        let scale = floors[0].max(floors[1]);
        let offset = h_inv[(0, 1)];
        constraints.push(Constraint::CovarianceProduct {
            i: 0,
            j: 1,
            offset: if offset.abs() <= 1e-12 * scale {
                0.0
            } else {
                offset
            },
            floor_i: floors[0],
            floor_j: floors[1],
        });
    } else if n > 2 {
        for order in 2..=n {
            constraints.push(Constraint::LeadingMinor {
                order,
                h_inverse_block: (0..order)
                    .map(|a| (0..order).map(|b| h_inv[(a, b)]).collect())
                    .collect(),
            });
        }
    }
    let rendered = constraints.iter().map(|c| c.render(&names)).collect();
    let optimal = match &result.slds {
        Some(ls) => Some(optimal_bases(ls)?),
        None => None,
    };
    Ok(CrbReport {
        parameter_names: names,
        h_inverse: rows(&h_inv),
        variance_floors: floors,
        constraints,
        rendered,
        invertible,
        unidentifiable,
        optimal_bases: optimal,
    })
}

fn spectral_inverse(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tol: f64) -> RealMatrix {
    let n = eig.eigenvalues.len();
    let mut out = RealMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > tol {
            let v = eig.eigenvectors.column(k);
            out += v * v.transpose() / l;
        }
    }
    out
}

/// Eigenbasis of each SLD, normalized, with the global phase chosen so the
/// largest-magnitude entry (the last one on ties) is real and positive.
pub fn optimal_bases(slds: &[ComplexMatrix]) -> Result<Vec<Vec<ComplexVector>>> {
    slds.iter()
        .map(|l| {
            let eig = hermitian_eig(l)?;
            Ok(eig
                .vectors
                .column_iter()
                .map(|col| fix_phase(col.normalize()))
                .collect())
        })
        .collect()
}

fn fix_phase(mut v: ComplexVector) -> ComplexVector {
    let largest = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v
        .iter()
        .rposition(|z| z.norm() >= largest * (1.0 - 1e-10))
        .unwrap_or(0);
    let z = v[pivot];
    if z.norm() > 0.0 {
        let phase: Complex64 = z.conj() / z.norm();
        v *= phase;
        v[pivot] = Complex64::new(v[pivot].norm(), 0.0);
    }
    v
}
