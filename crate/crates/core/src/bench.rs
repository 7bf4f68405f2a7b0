//! Timing harness comparing every method on random full-rank states.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::{QfimError, Result};
use crate::random::Ensemble;
use crate::solvers::{compute_with, relative_deviation, Method, MethodChoice, AGREEMENT_TOL};
use crate::states::{validate_density, DerivativeSet};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub n_params: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(QfimError::Domain(
                "bench needs at least one dimension".into(),
            ));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(QfimError::Domain(format!(
                "bench dimensions must be >= 2, got {d}"
            )));
        }
        if self.trials == 0 {
            return Err(QfimError::Domain("bench needs at least one trial".into()));
        }
        if self.n_params == 0 {
            return Err(QfimError::Domain(
                "bench needs at least one parameter".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub dim: usize,
    pub method: Method,
    pub trials: usize,
    pub failures: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub max_seconds: f64,
    /// Largest relative max-norm deviation from the vectorized value.
    pub max_relative_deviation: f64,
    pub agree: bool,
}

/// Seeds are derived per dimension so adding a dimension does not change
/// the instances drawn for the others.
fn dim_seed(seed: u64, dim: usize) -> u64 {
    seed ^ (dim as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Instances are drawn before any timing starts, so the numbers (not the
/// timings) are a pure function of the configuration.
pub fn run_bench(config: &BenchConfig, choice: &MethodChoice) -> Result<Vec<BenchRow>> {
    config.validate()?;
    choice.validate()?;
    let mut rows = Vec::new();
    for &dim in &config.dims {
        let mut ens = Ensemble::new(dim_seed(config.seed, dim));
        let instances = (0..config.trials)
            .map(|_| {
                let rho = validate_density(&ens.density(dim))?;
                let parts = (0..config.n_params).map(|_| ens.derivative(dim)).collect();
                Ok((rho, DerivativeSet::new(parts, dim)?))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut times = vec![Vec::with_capacity(config.trials); Method::ALL.len()];
        let mut failures = vec![0usize; Method::ALL.len()];
        let mut devs = vec![0.0f64; Method::ALL.len()];
        for (rho, d) in &instances {
            let mut reference = None;
            for (k, &method) in Method::ALL.iter().enumerate() {
                let start = Instant::now();
                let out = compute_with(method, rho, d, choice);
                times[k].push(start.elapsed().as_secs_f64());
                match out {
                    Ok(r) => {
                        if method == Method::Vectorized {
                            reference = Some(r.h);
                        } else if let Some(h0) = &reference {
                            devs[k] = devs[k].max(relative_deviation(h0, &r.h));
                        } else {
                            devs[k] = f64::INFINITY;
                        }
                    }
                    Err(_) => failures[k] += 1,
                }
            }
        }
        for (k, &method) in Method::ALL.iter().enumerate() {
            let t = &times[k];
            let n = t.len() as f64;
            let mean = t.iter().sum::<f64>() / n;
            let var = if t.len() > 1 {
                t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(BenchRow {
                dim,
                method,
                trials: config.trials,
                failures: failures[k],
                mean_seconds: mean,
                std_seconds: var.sqrt(),
                max_seconds: t.iter().copied().fold(0.0, f64::max),
                max_relative_deviation: devs[k],
                agree: failures[k] == 0 && devs[k] <= AGREEMENT_TOL,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "dim,method,trials,failures,mean_s,std_s,max_s,max_rel_dev_vs_vectorized,agree\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{:.3e},{}",
            r.dim,
            r.method.name(),
            r.trials,
            r.failures,
            r.mean_seconds,
            r.std_seconds,
            r.max_seconds,
            r.max_relative_deviation,
            if r.agree { "pass" } else { "fail" }
        );
    }
    out
}
