//! JSON problem and result files.
//!
//! Complex matrices are stored as two row-major real arrays `re` and `im`
//! of length `dim^2`. A problem file carries exactly one of
//!
//! * `rho` with `derivatives`,
//! * `generators` with `initial_state` (unitary encoding), or
//! * `family`, a built-in family id with parameter values.
//!
//! ```json
//! { "version": "1", "dim": 2,
//!   "family": { "id": "phase-noise-qubit", "parameters": [0.3, 0.5] } }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::QfimError;
use crate::families::{bell_phase_encoding, Builtin, PhaseNoiseQubit};
use crate::linalg::{c, ComplexMatrix};
use crate::metrology::CrbReport;
use crate::solvers::{compute, compute_encoding, rows, Diagnostics, MethodChoice, QfimResult};
use crate::states::{
    encode_unitary, validate_density, DensityMatrix, DerivativeSet, StateFamily, UnitaryEncoding,
};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl ToString) -> FormatError {
    FormatError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedMatrix {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl EncodedMatrix {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let (r, cols) = m.shape();
        let mut re = Vec::with_capacity(r * cols);
        let mut im = Vec::with_capacity(r * cols);
        for i in 0..r {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        EncodedMatrix { re, im }
    }

    pub fn to_matrix(&self, dim: usize, field: &str) -> Result<ComplexMatrix, FormatError> {
        let want = dim * dim;
        for (part, v) in [("re", &self.re), ("im", &self.im)] {
            if v.len() != want {
                return Err(field_err(
                    format!("{field}.{part}"),
                    format!("expected {want} entries (dim^2), found {}", v.len()),
                ));
            }
        }
        Ok(ComplexMatrix::from_fn(dim, dim, |i, j| {
            c(self.re[i * dim + j], self.im[i * dim + j])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub id: String,
    #[serde(default)]
    pub parameters: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameter_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<EncodedMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivatives: Option<Vec<EncodedMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<EncodedMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<EncodedMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, FormatError> {
    serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        FormatError::Syntax {
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })
}

impl ProblemFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn explicit(rho: &ComplexMatrix, derivatives: &[ComplexMatrix], names: &[&str]) -> Self {
        ProblemFile {
            version: FORMAT_VERSION.into(),
            dim: rho.nrows(),
            parameter_names: names.iter().map(|s| s.to_string()).collect(),
            rho: Some(EncodedMatrix::from_matrix(rho)),
            derivatives: Some(derivatives.iter().map(EncodedMatrix::from_matrix).collect()),
            generators: None,
            initial_state: None,
            family: None,
        }
    }

    pub fn builtin(builtin: Builtin, parameters: &[f64]) -> Self {
        let dim = match builtin {
            Builtin::PhaseNoiseQubit => 2,
            Builtin::BellPhase => 4,
        };
        ProblemFile {
            version: FORMAT_VERSION.into(),
            dim,
            parameter_names: Vec::new(),
            rho: None,
            derivatives: None,
            generators: None,
            initial_state: None,
            family: Some(FamilySpec {
                id: builtin.id().into(),
                parameters: parameters.to_vec(),
            }),
        }
    }

    /// Checks the version, the one-of rule and all array lengths, and builds
    /// validated states.
    pub fn resolve(&self) -> Result<ResolvedProblem, FormatError> {
        if self.version != FORMAT_VERSION {
            return Err(field_err(
                "version",
                format!(
                    "unsupported version '{}', expected '{FORMAT_VERSION}'",
                    self.version
                ),
            ));
        }
        if self.dim == 0 {
            return Err(field_err("dim", "must be positive"));
        }
        let explicit = self.rho.is_some() || self.derivatives.is_some();
        let encoded = self.generators.is_some() || self.initial_state.is_some();
        let family = self.family.is_some();
        if [explicit, encoded, family].iter().filter(|&&x| x).count() != 1 {
            return Err(field_err(
                "rho/generators/family",
                "exactly one of {rho + derivatives, generators + initial_state, family} must be given",
            ));
        }
        let dim = self.dim;
        let (kind, n_params, default_names): (ProblemKind, usize, Vec<String>) = if explicit {
            let rho_m = self
                .rho
                .as_ref()
                .ok_or_else(|| field_err("rho", "missing (derivatives were given)"))?
                .to_matrix(dim, "rho")?;
            let rho = validate_density(&rho_m).map_err(|e| field_err("rho", e))?;
            let ds = self
                .derivatives
                .as_ref()
                .ok_or_else(|| field_err("derivatives", "missing (rho was given)"))?;
            let mats = ds
                .iter()
                .enumerate()
                .map(|(i, m)| m.to_matrix(dim, &format!("derivatives[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let n = mats.len();
            let d = DerivativeSet::new(mats, dim).map_err(|e| field_err("derivatives", e))?;
            (
                ProblemKind::Explicit {
                    rho,
                    derivatives: d,
                },
                n,
                generic_names(n),
            )
        } else if encoded {
            let gens = self
                .generators
                .as_ref()
                .ok_or_else(|| field_err("generators", "missing (initial_state was given)"))?;
            let init = self
                .initial_state
                .as_ref()
                .ok_or_else(|| field_err("initial_state", "missing (generators were given)"))?
                .to_matrix(dim, "initial_state")?;
            let init = validate_density(&init).map_err(|e| field_err("initial_state", e))?;
            let mats = gens
                .iter()
                .enumerate()
                .map(|(i, m)| m.to_matrix(dim, &format!("generators[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let n = mats.len();
            let enc = UnitaryEncoding::new(mats, init).map_err(|e| field_err("generators", e))?;
            (
                ProblemKind::Encoding {
                    encoding: enc,
                    eps: vec![0.0; n],
                },
                n,
                generic_names(n),
            )
        } else {
            let spec = self.family.as_ref().expect("checked above");
            let builtin = Builtin::from_id(&spec.id).ok_or_else(|| {
                field_err(
                    "family.id",
                    format!(
                        "unknown family '{}', expected one of: {}",
                        spec.id,
                        Builtin::ALL.map(|b| b.id()).join(", ")
                    ),
                )
            })?;
            let names: Vec<String> = builtin
                .parameter_names()
                .iter()
                .map(|s| s.to_string())
                .collect();
            let (kind, fam_dim) = match builtin {
                Builtin::PhaseNoiseQubit => {
                    if spec.parameters.len() != 2 {
                        return Err(field_err(
                            "family.parameters",
                            "phase-noise-qubit takes [theta, nu]",
                        ));
                    }
                    let rho = PhaseNoiseQubit
                        .evaluate(&spec.parameters)
                        .map_err(|e| field_err("family.parameters", e))?;
                    let d = PhaseNoiseQubit
                        .derivatives(&spec.parameters)
                        .map_err(|e| field_err("family.parameters", e))?;
                    (
                        ProblemKind::Explicit {
                            rho,
                            derivatives: d,
                        },
                        2,
                    )
                }
                Builtin::BellPhase => {
                    let eps = match spec.parameters.as_slice() {
                        [] => vec![0.0],
                        [theta] => vec![*theta],
                        _ => {
                            return Err(field_err("family.parameters", "bell-phase takes [theta]"))
                        }
                    };
                    (
                        ProblemKind::Encoding {
                            encoding: bell_phase_encoding(),
                            eps,
                        },
                        4,
                    )
                }
            };
            if fam_dim != dim {
                return Err(field_err(
                    "dim",
                    format!(
                        "family '{}' has dimension {fam_dim}, file says {dim}",
                        spec.id
                    ),
                ));
            }
            (kind, names.len(), names)
        };
        let names = if self.parameter_names.is_empty() {
            default_names
        } else if self.parameter_names.len() == n_params {
            self.parameter_names.clone()
        } else {
            return Err(field_err(
                "parameter_names",
                format!(
                    "{} names for {n_params} parameters",
                    self.parameter_names.len()
                ),
            ));
        };
        Ok(ResolvedProblem { names, kind })
    }
}

fn generic_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

#[derive(Debug, Clone)]
pub enum ProblemKind {
    Explicit {
        rho: DensityMatrix,
        derivatives: DerivativeSet,
    },
    Encoding {
        encoding: UnitaryEncoding,
        eps: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct ResolvedProblem {
    pub names: Vec<String>,
    pub kind: ProblemKind,
}

impl ResolvedProblem {
    /// The state and derivatives at the problem's parameter point.
    pub fn state(&self) -> Result<(DensityMatrix, DerivativeSet), QfimError> {
        match &self.kind {
            ProblemKind::Explicit { rho, derivatives } => Ok((rho.clone(), derivatives.clone())),
            ProblemKind::Encoding { encoding, eps } => encode_unitary(encoding, eps),
        }
    }

    pub fn compute(&self, choice: &MethodChoice) -> Result<QfimResult, QfimError> {
        match &self.kind {
            ProblemKind::Explicit { rho, derivatives } => compute(rho, derivatives, choice),
            ProblemKind::Encoding { encoding, eps } => compute_encoding(encoding, eps, choice),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultFile {
    pub version: String,
    pub method: String,
    pub parameter_names: Vec<String>,
    pub qfim: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slds: Option<Vec<EncodedMatrix>>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crb: Option<CrbRendering>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrbRendering {
    #[serde(flatten)]
    pub report: CrbReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_bases: Option<Vec<Vec<EncodedVector>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodedVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ResultFile {
    pub fn new(
        result: &QfimResult,
        names: &[String],
        include_slds: bool,
        crb: Option<CrbReport>,
    ) -> Self {
        let slds = if include_slds {
            result
                .slds
                .as_ref()
                .map(|ls| ls.iter().map(EncodedMatrix::from_matrix).collect())
        } else {
            None
        };
        let crb = crb.map(|report| {
            let optimal_bases = report.optimal_bases.as_ref().map(|bases| {
                bases
                    .iter()
                    .map(|basis| {
                        basis
                            .iter()
                            .map(|v| EncodedVector {
                                re: v.iter().map(|z| z.re).collect(),
                                im: v.iter().map(|z| z.im).collect(),
                            })
                            .collect()
                    })
                    .collect()
            });
            CrbRendering {
                report,
                optimal_bases,
            }
        });
        ResultFile {
            version: FORMAT_VERSION.into(),
            method: result.method.name().into(),
            parameter_names: names.to_vec(),
            qfim: rows(&result.h),
            slds,
            diagnostics: result.diagnostics.clone(),
            crb,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result files always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn row_major_encoding() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1., 2.), c(3., 4.), c(5., 6.), c(7., 8.)]);
        let e = EncodedMatrix::from_matrix(&m);
        assert_eq!(e.re, vec![1., 3., 5., 7.]);
        assert_eq!(e.im, vec![2., 4., 6., 8.]);
        assert_eq!(e.to_matrix(2, "m").unwrap(), m);
        assert!(matches!(
            e.to_matrix(3, "m"),
            Err(FormatError::Field { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_problem("{\n  \"version\": \"1\",\n  \"dim\": ,\n}").unwrap_err();
        match err {
            FormatError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        let err = parse_problem(r#"{"version": "1", "dim": 2, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn one_of_rule() {
        let mut p = ProblemFile::builtin(Builtin::PhaseNoiseQubit, &[0.3, 0.5]);
        p.rho = Some(EncodedMatrix::from_matrix(&ComplexMatrix::identity(2, 2)));
        assert!(matches!(p.resolve(), Err(FormatError::Field { .. })));
        let mut p = ProblemFile::builtin(Builtin::PhaseNoiseQubit, &[0.3, 0.5]);
        p.family = None;
        assert!(p.resolve().is_err());
    }

    #[test]
    fn version_is_checked() {
        let mut p = ProblemFile::builtin(Builtin::BellPhase, &[]);
        p.version = "2".into();
        let err = p.resolve().unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn explicit_problem_resolves() {
        let rho = ComplexMatrix::identity(2, 2).scale(0.5);
        let d = ComplexMatrix::zeros(2, 2);
        let p = ProblemFile::explicit(&rho, &[d], &["x"]);
        let text = p.to_json();
        let r = parse_problem(&text).unwrap().resolve().unwrap();
        assert_eq!(r.names, vec!["x".to_string()]);
        let res = r.compute(&MethodChoice::default()).unwrap();
        assert_eq!(res.h[(0, 0)], 0.0);
    }

    #[test]
    fn invalid_density_is_a_field_error() {
        let rho = ComplexMatrix::identity(2, 2).scale(0.6);
        let p = ProblemFile::explicit(&rho, &[ComplexMatrix::zeros(2, 2)], &[]);
        match p.resolve() {
            Err(FormatError::Field { field, message }) => {
                assert_eq!(field, "rho");
                assert!(message.contains("1.2"));
            }
            other => panic!("expected field error, got {other:?}"),
        }
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            -1e3..1e3f64,
        ]
    }

    proptest! {
        #[test]
        fn problem_file_round_trips_bit_exact(
            dim in 1usize..4,
            seed in proptest::collection::vec(finite(), 64),
            n_params in 0usize..3,
        ) {
            let take = |off: usize| EncodedMatrix {
                re: seed[off..off + dim * dim].to_vec(),
                im: seed[off + 16..off + 16 + dim * dim].to_vec(),
            };
            let p = ProblemFile {
                version: FORMAT_VERSION.into(),
                dim,
                parameter_names: (0..n_params).map(|i| format!("q{i}")).collect(),
                rho: Some(take(0)),
                derivatives: Some((0..n_params).map(|i| take(32 + i)).collect()),
                generators: None,
                initial_state: None,
                family: None,
            };
            let once = parse_problem(&p.to_json()).unwrap();
            let twice = parse_problem(&once.to_json()).unwrap();
            for (a, b) in [(&p, &once), (&once, &twice)] {
                let (ra, rb) = (a.rho.as_ref().unwrap(), b.rho.as_ref().unwrap());
                prop_assert!(ra.re.iter().zip(&rb.re).all(|(x, y)| x.to_bits() == y.to_bits()));
                prop_assert!(ra.im.iter().zip(&rb.im).all(|(x, y)| x.to_bits() == y.to_bits()));
                prop_assert_eq!(a, b);
            }
        }
    }
}
