//! Quantum Fisher information matrix and symmetric logarithmic derivative
//! solvers.
//!
//! Every route computes `H^{ij} = tr[d_i rho L_j]` where the SLD `L_j`
//! solves `(L_j rho + rho L_j) / 2 = d_j rho`. In vectorized form that
//! equation reads `M vec(L_j) = 2 vec(d_j rho)` with the Kronecker sum
//! `M = conj(rho) (x) I + I (x) rho`, so
//! `H^{ij} = 2 vec(d_i rho)^H M^{-1} vec(d_j rho)`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{QfimError, Result};
use crate::linalg::{
    c, hermitian_part, kron, max_abs, max_abs_real, trace_of_product, unvectorize, vectorize,
    Cholesky, ComplexMatrix, ComplexVector, RealMatrix, SpectralPseudoinverse,
};
use crate::quadrature::GaussLegendre;
use crate::states::{regularize, DensityMatrix, DerivativeSet, UnitaryEncoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vectorized,
    Eigen,
    EigenMatrixForm,
    Integral,
    RegularizedLimit,
    Pseudoinverse,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Vectorized,
        Method::Eigen,
        Method::EigenMatrixForm,
        Method::Integral,
        Method::RegularizedLimit,
        Method::Pseudoinverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vectorized => "vectorized",
            Method::Eigen => "eigen",
            Method::EigenMatrixForm => "eigen-matrix-form",
            Method::Integral => "integral",
            Method::RegularizedLimit => "regularized-limit",
            Method::Pseudoinverse => "pseudoinverse",
        }
    }

    /// Routes that invert `M` (or integrate `e^{-rho t}`) directly.
    pub fn requires_full_rank(self) -> bool {
        matches!(
            self,
            Method::Vectorized | Method::EigenMatrixForm | Method::Integral
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "vectorized" => Method::Vectorized,
            "eigen" => Method::Eigen,
            "eigen-matrix" | "eigen-matrix-form" => Method::EigenMatrixForm,
            "integral" => Method::Integral,
            "regularized" | "regularized-limit" => Method::RegularizedLimit,
            "pseudoinverse" => Method::Pseudoinverse,
            other => return Err(format!("unknown method '{other}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Vectorized for full-rank states; eigen (confirmed by the regularized
    /// limit) otherwise.
    #[default]
    Auto,
    Fixed(Method),
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            Ok(Strategy::Auto)
        } else {
            s.parse().map(Strategy::Fixed)
        }
    }
}

/// Geometric sequence `nu_k = nu_start * ratio^k` for the regularized limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuSchedule {
    pub nu0: f64,
    pub ratio: f64,
    pub max_steps: usize,
    /// Convergence threshold on successive estimates, relative to
    /// `max(1, max|H|)`.
    pub tol_limit: f64,
}

impl Default for NuSchedule {
    fn default() -> Self {
        NuSchedule {
            nu0: 1e-3,
            ratio: 0.1,
            max_steps: 6,
            tol_limit: 1e-7,
        }
    }
}

impl NuSchedule {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.nu0) || !open_unit(self.ratio) {
            return Err(QfimError::Domain(format!(
                "nu schedule needs nu0 and ratio in (0, 1), got nu0 = {}, ratio = {}",
                self.nu0, self.ratio
            )));
        }
        if self.max_steps < 2 {
            return Err(QfimError::Domain(
                "nu schedule needs at least 2 steps".into(),
            ));
        }
        if self.tol_limit.is_nan() || self.tol_limit <= 0.0 {
            return Err(QfimError::Domain(
                "nu schedule tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// The integral is truncated at `t_max_factor / lambda_min`.
    pub t_max_factor: f64,
    /// Relative change between panel doublings that counts as converged.
    pub tol: f64,
    pub max_doublings: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes: 16,
            t_max_factor: 50.0,
            tol: 1e-8,
            max_doublings: 10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(QfimError::Domain(format!(
                "quadrature needs at least 8 nodes, got {}",
                self.nodes
            )));
        }
        if !(self.t_max_factor > 0.0 && self.tol > 0.0) {
            return Err(QfimError::Domain(
                "quadrature truncation factor and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MethodChoice {
    pub strategy: Strategy,
    pub nu_schedule: NuSchedule,
    pub quadrature: QuadratureSpec,
}

impl MethodChoice {
    pub fn fixed(method: Method) -> Self {
        MethodChoice {
            strategy: Strategy::Fixed(method),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nu_schedule.validate()?;
        self.quadrature.validate()
    }
}

/// Eigen and regularized-limit values at a rank-deficient point where they
/// disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discontinuity {
    pub eigen: Vec<Vec<f64>>,
    pub regularized: Option<Vec<Vec<f64>>>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// max |H^{ij} - H^{ji}| before symmetrization.
    pub max_asymmetry: f64,
    /// max |(L rho + rho L)/2 - d rho| over the returned SLDs.
    pub max_lyapunov_residual: Option<f64>,
    pub nu_sequence_used: Option<Vec<f64>>,
    /// Largest imaginary part dropped from an entry of H.
    pub imag_discard: f64,
    /// Number of integrand evaluations (integral route only).
    pub quadrature_evaluations: Option<usize>,
    pub discontinuity: Option<Discontinuity>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct QfimResult {
    /// Real symmetric QFIM.
    pub h: RealMatrix,
    pub slds: Option<Vec<ComplexMatrix>>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

pub fn rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Admission threshold for `p_k + p_l` in the spectral sum.
fn tol_sum(dim: usize) -> f64 {
    dim as f64 * f64::EPSILON
}

const SINGULAR_ADVICE: &str =
    "rho is rank deficient; use the eigen, pseudoinverse or regularized-limit method";

fn require_full_rank(rho: &DensityMatrix) -> Result<()> {
    if rho.is_full_rank() {
        Ok(())
    } else {
        Err(QfimError::Singular {
            pivot: rho.spectrum().min(),
            advice: SINGULAR_ADVICE,
        })
    }
}

fn check_dims(rho: &DensityMatrix, d: &DerivativeSet) -> Result<()> {
    let n = rho.dim();
    for (i, p) in d.partials().iter().enumerate() {
        if p.nrows() != n || p.ncols() != n {
            return Err(QfimError::Dimension(format!(
                "derivative {i} is {}x{}, rho is {n}x{n}",
                p.nrows(),
                p.ncols()
            )));
        }
    }
    Ok(())
}

/// max |(L rho + rho L)/2 - d rho|
pub fn lyapunov_residual(rho: &ComplexMatrix, drho: &ComplexMatrix, sld: &ComplexMatrix) -> f64 {
    max_abs(&((sld * rho + rho * sld).scale(0.5) - drho))
}

/// Symmetrizes the Gram matrix into H and fills in the diagnostics.
fn finish(
    gram: &ComplexMatrix,
    slds: Option<Vec<ComplexMatrix>>,
    rho: &DensityMatrix,
    d: &DerivativeSet,
    method: Method,
) -> QfimResult {
    let n = gram.nrows();
    let mut diagnostics = Diagnostics::default();
    let mut h = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let g = gram[(i, j)];
            diagnostics.imag_discard = diagnostics.imag_discard.max(g.im.abs());
            diagnostics.max_asymmetry = diagnostics
                .max_asymmetry
                .max((g.re - gram[(j, i)].re).abs());
            h[(i, j)] = 0.5 * (g.re + gram[(j, i)].re);
        }
    }
    diagnostics.max_lyapunov_residual = slds.as_ref().map(|ls| {
        ls.iter()
            .zip(d.partials())
            .map(|(l, p)| lyapunov_residual(rho.matrix(), p, l))
            .fold(0.0, f64::max)
    });
    QfimResult {
        h,
        slds,
        method,
        diagnostics,
    }
}

/// `G_ij = 2 vec(d_i)^H x_j`
fn gram_from_solutions(vecs: &[ComplexVector], xs: &[ComplexVector]) -> ComplexMatrix {
    let n = vecs.len();
    ComplexMatrix::from_fn(n, n, |i, j| vecs[i].dotc(&xs[j]) * 2.0)
}

fn slds_from_solutions(xs: &[ComplexVector], dim: usize) -> Result<Vec<ComplexMatrix>> {
    xs.iter()
        .map(|x| Ok(hermitian_part(&unvectorize(&x.scale(2.0), dim)?)))
        .collect()
}

/// `conj(rho) (x) I + I (x) rho`
pub fn build_m(rho: &DensityMatrix) -> ComplexMatrix {
    let n = rho.dim();
    let id = ComplexMatrix::identity(n, n);
    kron(&rho.matrix().conjugate(), &id) + kron(&id, rho.matrix())
}

/// SLD of a single derivative from `vec(L) = 2 M^{-1} vec(d rho)`.
pub fn sld_vectorized(rho: &DensityMatrix, drho: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_full_rank(rho)?;
    let d = DerivativeSet::new(vec![drho.clone()], rho.dim())?;
    let chol = Cholesky::factor(&build_m(rho))?;
    let x = chol.solve(&vectorize(&d.partials()[0]))?;
    Ok(slds_from_solutions(&[x], rho.dim())?.remove(0))
}

/// `H^{ij} = 2 vec(d_i rho)^H M^{-1} vec(d_j rho)`, with one Cholesky
/// factorization of `M` shared by all parameters.
pub fn qfim_vectorized(rho: &DensityMatrix, d: &DerivativeSet) -> Result<QfimResult> {
    check_dims(rho, d)?;
    require_full_rank(rho)?;
    let chol = Cholesky::factor(&build_m(rho))?;
    let vecs: Vec<_> = d.partials().iter().map(vectorize).collect();
    let xs = vecs
        .iter()
        .map(|v| chol.solve(v))
        .collect::<Result<Vec<_>>>()?;
    let gram = gram_from_solutions(&vecs, &xs);
    let slds = slds_from_solutions(&xs, rho.dim())?;
    Ok(finish(&gram, Some(slds), rho, d, Method::Vectorized))
}

/// Spectral sum over eigenpairs of rho,
/// `H^{ij} = 2 sum_{p_k + p_l > 0} <k|d_i|l><l|d_j|k> / (p_k + p_l)`.
/// Pairs with `p_k + p_l <= dim * eps` are dropped, so rank-deficient
/// states are handled.
pub fn qfim_eigen(rho: &DensityMatrix, d: &DerivativeSet) -> Result<QfimResult> {
    check_dims(rho, d)?;
    let n = rho.dim();
    let eig = rho.spectrum();
    let u = &eig.vectors;
    let p = &eig.values;
    let cutoff = tol_sum(n);
    let in_eigenbasis: Vec<ComplexMatrix> =
        d.partials().iter().map(|dp| u.adjoint() * dp * u).collect();
    let np = d.len();
    let mut gram = ComplexMatrix::zeros(np, np);
    let mut slds = Vec::with_capacity(np);
    for (i, a) in in_eigenbasis.iter().enumerate() {
        let mut l_eig = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                let s = p[k] + p[l];
                if s > cutoff {
                    l_eig[(k, l)] = a[(k, l)] * (2.0 / s);
                    for (j, b) in in_eigenbasis.iter().enumerate() {
                        gram[(i, j)] += a[(k, l)] * b[(l, k)] * (2.0 / s);
                    }
                }
            }
        }
        slds.push(hermitian_part(&(u * l_eig * u.adjoint())));
    }
    Ok(finish(&gram, Some(slds), rho, d, Method::Eigen))
}

/// The eigendecomposition written as a Kronecker product:
/// `H^{ij} = 2 vec(d_i)^H W (D (x) I + I (x) D)^{-1} W^H vec(d_j)` with
/// `W = conj(U) (x) U`. The middle factor is diagonal.
pub fn qfim_eigen_matrix_form(rho: &DensityMatrix, d: &DerivativeSet) -> Result<QfimResult> {
    check_dims(rho, d)?;
    require_full_rank(rho)?;
    let n = rho.dim();
    let eig = rho.spectrum();
    let w = kron(&eig.vectors.conjugate(), &eig.vectors);
    let id = ComplexMatrix::identity(n, n);
    let dmat = ComplexMatrix::from_diagonal(&eig.values.map(|x| c(x, 0.0)));
    let middle = kron(&dmat, &id) + kron(&id, &dmat);
    let vecs: Vec<_> = d.partials().iter().map(vectorize).collect();
    let xs: Vec<ComplexVector> = vecs
        .iter()
        .map(|v| {
            let mut y = w.ad_mul(v);
            for (a, ya) in y.iter_mut().enumerate() {
                *ya /= middle[(a, a)];
            }
            &w * y
        })
        .collect();
    let gram = gram_from_solutions(&vecs, &xs);
    let slds = slds_from_solutions(&xs, n)?;
    Ok(finish(&gram, Some(slds), rho, d, Method::EigenMatrixForm))
}

/// Numerical quadrature of `L_i = 2 int_0^inf e^{-rho t} d_i e^{-rho t} dt`,
/// with `H^{ij} = tr[d_i L_j]`.
///
/// `[0, T]` with `T = t_max_factor / lambda_min` is split into panels
/// `[0, 1/lambda_max], [1/lambda_max, 2/lambda_max], ...` of doubling width;
/// each panel is subdivided and the subdivision doubled until `H` changes by
/// less than `tol` relative.
pub fn qfim_integral(
    rho: &DensityMatrix,
    d: &DerivativeSet,
    quad: &QuadratureSpec,
) -> Result<QfimResult> {
    check_dims(rho, d)?;
    quad.validate()?;
    let eig = rho.spectrum();
    if !rho.is_full_rank() {
        return Err(QfimError::Divergence {
            lambda_min: eig.min(),
        });
    }
    let (lmin, lmax) = (eig.min(), eig.max());
    let t_end = quad.t_max_factor / lmin;
    let mut breaks = vec![0.0];
    let mut t = 1.0 / lmax;
    while t < t_end {
        breaks.push(t);
        t *= 2.0;
    }
    breaks.push(t_end);

    let rule = GaussLegendre::new(quad.nodes);
    let n = rho.dim();
    let mut evaluations = 0usize;
    let mut integrate = |subdivisions: usize| -> Vec<ComplexMatrix> {
        let mut acc = vec![ComplexMatrix::zeros(n, n); d.len()];
        for panel in breaks.windows(2) {
            let width = (panel[1] - panel[0]) / subdivisions as f64;
            for s in 0..subdivisions {
                let a = panel[0] + s as f64 * width;
                for (t, w) in rule.on(a, a + width) {
                    let e = eig.exp_scaled(-t);
                    for (acc_i, dp) in acc.iter_mut().zip(d.partials()) {
                        *acc_i += (&e * dp * &e).scale(w);
                    }
                    evaluations += 1;
                }
            }
        }
        acc.into_iter()
            .map(|m| hermitian_part(&m.scale(2.0)))
            .collect()
    };
    let gram_of = |slds: &[ComplexMatrix]| {
        ComplexMatrix::from_fn(d.len(), d.len(), |i, j| {
            trace_of_product(&d.partials()[i], &slds[j])
        })
    };

    let mut subdivisions = 1;
    let mut slds = integrate(subdivisions);
    let mut gram = gram_of(&slds);
    let mut converged = false;
    for _ in 0..quad.max_doublings {
        subdivisions *= 2;
        let next = integrate(subdivisions);
        let next_gram = gram_of(&next);
        let change = max_abs(&(&next_gram - &gram));
        let scale = max_abs(&next_gram);
        slds = next;
        gram = next_gram;
        if change <= quad.tol * scale {
            converged = true;
            break;
        }
    }
    let mut result = finish(&gram, Some(slds), rho, d, Method::Integral);
    result.diagnostics.quadrature_evaluations = Some(evaluations);
    if !converged {
        result.diagnostics.warnings.push(format!(
            "quadrature did not reach relative tolerance {:.1e} after {} doublings",
            quad.tol, quad.max_doublings
        ));
    }
    Ok(result)
}

/// `H = lim_{nu -> 0} H(rho_nu)` with `rho_nu = (1 - nu) rho + nu I/dim` and
/// `d rho_nu = (1 - nu) d rho`.
///
/// The sweep starts at `min(nu0, dim * lambda_min^+ / 10)`, where
/// `lambda_min^+` is the smallest non-zero eigenvalue: `H(rho_nu)` is
/// analytic in `nu` only on a disc of roughly that radius. The iterates are
/// extrapolated to `nu = 0` with a Richardson (Neville) tableau; the sweep
/// stops when two successive diagonal entries of the tableau (or two raw
/// iterates) agree within `tol_limit * max(1, max|H|)`.
pub fn qfim_regularized_limit(
    rho: &DensityMatrix,
    d: &DerivativeSet,
    schedule: &NuSchedule,
) -> Result<QfimResult> {
    check_dims(rho, d)?;
    schedule.validate()?;
    let n = rho.dim();
    let tol = rho.tol_rank();
    let smallest_nonzero = rho
        .spectrum()
        .values
        .iter()
        .copied()
        .find(|&l| l > tol)
        .unwrap_or(1.0);
    let nu_start = schedule.nu0.min(n as f64 * smallest_nonzero / 10.0);

    let mut history: Vec<(f64, RealMatrix)> = Vec::new();
    let mut nus: Vec<f64> = Vec::new();
    // Last row of the tableau: entry j extrapolates with order j.
    let mut row: Vec<(RealMatrix, Vec<ComplexMatrix>)> = Vec::new();
    for step in 0..schedule.max_steps {
        let nu = nu_start * schedule.ratio.powi(step as i32);
        nus.push(nu);
        let rho_nu = regularize(rho, nu)?;
        let r = qfim_vectorized(&rho_nu, &d.scaled(1.0 - nu))?;
        let slds = r.slds.expect("vectorized route returns SLDs");

        let mut next = vec![(r.h.clone(), slds)];
        for j in 1..=row.len() {
            let w = nu / (nus[step - j] - nu);
            let (h, l) = &next[j - 1];
            let (hp, lp) = &row[j - 1];
            let h0 = h + (h - hp) * w;
            let l0 = l
                .iter()
                .zip(lp)
                .map(|(a, b)| a + (a - b).scale(w))
                .collect();
            next.push((h0, l0));
        }

        if let Some((_, prev_h)) = history.last() {
            let best = &next.last().expect("non-empty").0;
            let scale = max_abs_real(best).max(1.0);
            let raw_change = max_abs_real(&(&r.h - prev_h));
            let extrap_change = max_abs_real(&(best - &row.last().expect("non-empty").0));
            if raw_change < schedule.tol_limit * scale || extrap_change < schedule.tol_limit * scale
            {
                let (h0, l0) = next.pop().expect("non-empty");
                return Ok(assemble_limit(h0, l0, rho, d, nus));
            }
        }
        history.push((nu, r.h));
        row = next;
    }
    Err(QfimError::history_from(&history))
}

fn assemble_limit(
    h: RealMatrix,
    slds: Vec<ComplexMatrix>,
    rho: &DensityMatrix,
    d: &DerivativeSet,
    nus: Vec<f64>,
) -> QfimResult {
    let gram = h.map(|x| c(x, 0.0));
    let slds = slds.iter().map(hermitian_part).collect();
    let mut result = finish(&gram, Some(slds), rho, d, Method::RegularizedLimit);
    result.diagnostics.nu_sequence_used = Some(nus);
    result
}

/// `H^{ij} = 2 vec(d_i)^H M^+ vec(d_j)` with a spectrally truncated
/// pseudoinverse; equals the vectorized route for full-rank rho.
pub fn qfim_pseudoinverse(rho: &DensityMatrix, d: &DerivativeSet) -> Result<QfimResult> {
    check_dims(rho, d)?;
    let pinv = SpectralPseudoinverse::new(&build_m(rho));
    let vecs: Vec<_> = d.partials().iter().map(vectorize).collect();
    let xs: Vec<_> = vecs.iter().map(|v| pinv.apply(v)).collect();
    let gram = gram_from_solutions(&vecs, &xs);
    let slds = slds_from_solutions(&xs, rho.dim())?;
    Ok(finish(&gram, Some(slds), rho, d, Method::Pseudoinverse))
}

/// QFIM of `U(eps) rho0 U(eps)^H` for commuting generators, which does not
/// depend on `eps`: `H^{ij} = 2 vec([K_i, rho0])^H M0^{-1} vec([K_j, rho0])`.
/// A rank-deficient `rho0` goes through the regularized limit.
pub fn qfim_unitary_commuting(enc: &UnitaryEncoding, schedule: &NuSchedule) -> Result<QfimResult> {
    if !enc.commuting() {
        return Err(QfimError::NonCommuting {
            max_commutator: enc.max_commutator(),
        });
    }
    let rho0 = enc.initial_state();
    let d = enc.commutator_derivatives();
    if rho0.is_full_rank() {
        qfim_vectorized(rho0, &d)
    } else {
        qfim_regularized_limit(rho0, &d, schedule)
    }
}

/// Squared infinitesimal Bures distance
/// `d_B^2(rho, rho + d rho) = 1/2 vec(d rho)^H M^{-1} vec(d rho)`.
pub fn bures_infinitesimal(rho: &DensityMatrix, drho_total: &ComplexMatrix) -> Result<f64> {
    require_full_rank(rho)?;
    let d = DerivativeSet::new(vec![drho_total.clone()], rho.dim())?;
    let v = vectorize(&d.partials()[0]);
    let x = Cholesky::factor(&build_m(rho))?.solve(&v)?;
    Ok(0.5 * v.dotc(&x).re)
}

/// Relative deviation at which a rank-deficient point is reported as a
/// discontinuity between the eigen and regularized-limit values.
pub const DISCONTINUITY_TOL: f64 = 1e-5;

pub fn compute_with(
    method: Method,
    rho: &DensityMatrix,
    d: &DerivativeSet,
    choice: &MethodChoice,
) -> Result<QfimResult> {
    match method {
        Method::Vectorized => qfim_vectorized(rho, d),
        Method::Eigen => qfim_eigen(rho, d),
        Method::EigenMatrixForm => qfim_eigen_matrix_form(rho, d),
        Method::Integral => qfim_integral(rho, d, &choice.quadrature),
        Method::RegularizedLimit => qfim_regularized_limit(rho, d, &choice.nu_schedule),
        Method::Pseudoinverse => qfim_pseudoinverse(rho, d),
    }
}

/// Dispatches on `choice.strategy`.
pub fn compute(
    rho: &DensityMatrix,
    d: &DerivativeSet,
    choice: &MethodChoice,
) -> Result<QfimResult> {
    choice.validate()?;
    match choice.strategy {
        Strategy::Fixed(m) => compute_with(m, rho, d, choice),
        Strategy::Auto if rho.is_full_rank() => qfim_vectorized(rho, d),
        Strategy::Auto => {
            let mut result = qfim_eigen(rho, d)?;
            let limit = qfim_regularized_limit(rho, d, &choice.nu_schedule);
            check_against_limit(&mut result, limit);
            Ok(result)
        }
    }
}

/// Attaches a discontinuity report when the regularized limit disagrees with
/// (or fails to confirm) the spectral value.
fn check_against_limit(result: &mut QfimResult, limit: Result<QfimResult>) {
    match limit {
        Ok(lim) => {
            let dev = max_abs_real(&(&lim.h - &result.h));
            let scale = max_abs_real(&result.h).max(1.0);
            if dev > DISCONTINUITY_TOL * scale {
                result.diagnostics.warnings.push(format!(
                    "removable discontinuity: eigen and regularized-limit values differ by {dev:.3e}"
                ));
                result.diagnostics.discontinuity = Some(Discontinuity {
                    eigen: rows(&result.h),
                    regularized: Some(rows(&lim.h)),
                    deviation: Some(dev),
                });
            }
        }
        Err(e) => {
            result.diagnostics.warnings.push(format!(
                "regularized limit could not confirm the value: {e}"
            ));
            result.diagnostics.discontinuity = Some(Discontinuity {
                eigen: rows(&result.h),
                regularized: None,
                deviation: None,
            });
        }
    }
}

/// QFIM for a unitary encoding at `eps`. `Auto` with commuting generators
/// uses the commutator formula, which does not depend on `eps`; otherwise the
/// encoded state at `eps` goes through [`compute`].
pub fn compute_encoding(
    enc: &UnitaryEncoding,
    eps: &[f64],
    choice: &MethodChoice,
) -> Result<QfimResult> {
    choice.validate()?;
    match choice.strategy {
        Strategy::Auto if enc.commuting() => qfim_unitary_commuting(enc, &choice.nu_schedule),
        _ => {
            let (rho, d) = crate::states::encode_unitary(enc, eps)?;
            compute(&rho, &d, choice)
        }
    }
}

/// Outcome of one method in a comparison run.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: std::result::Result<QfimResult, String>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDeviation {
    pub a: Method,
    pub b: Method,
    pub absolute: f64,
    pub relative: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rank_deficient: bool,
    pub outcomes: Vec<MethodOutcome>,
    pub deviations: Vec<PairDeviation>,
}

/// Relative deviation above which a pair of methods is flagged.
pub const AGREEMENT_TOL: f64 = 1e-6;

/// `max|A - B| / max(max|A|, max|B|)`, zero when both vanish.
pub fn relative_deviation(a: &RealMatrix, b: &RealMatrix) -> f64 {
    let abs = max_abs_real(&(a - b));
    let scale = max_abs_real(a).max(max_abs_real(b));
    if abs == 0.0 {
        0.0
    } else {
        abs / scale
    }
}

impl ComparisonReport {
    pub fn all_agree(&self) -> bool {
        self.deviations.iter().all(|p| !p.flagged)
    }

    pub fn succeeded(&self) -> impl Iterator<Item = (Method, &QfimResult)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(|r| (o.method, r)))
    }

    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    /// Methods that failed although they apply to this state. Full-rank-only
    /// routes refusing a singular state are expected and not listed.
    pub fn unexpected_failures(&self) -> Vec<Method> {
        self.outcomes
            .iter()
            .filter(|o| o.result.is_err())
            .filter(|o| !(self.rank_deficient && o.method.requires_full_rank()))
            .map(|o| o.method)
            .collect()
    }

    /// Every applicable method succeeded and all pairs agree.
    pub fn passes(&self) -> bool {
        self.all_agree() && self.unexpected_failures().is_empty()
    }

    pub fn max_relative_deviation(&self) -> f64 {
        self.deviations
            .iter()
            .map(|p| p.relative)
            .fold(0.0, f64::max)
    }
}

/// Runs every method in [`Method::ALL`] order and compares all pairs that
/// succeeded. Failures are recorded, not raised.
pub fn compare_methods(
    rho: &DensityMatrix,
    d: &DerivativeSet,
    choice: &MethodChoice,
) -> ComparisonReport {
    let outcomes: Vec<MethodOutcome> = Method::ALL
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = compute_with(method, rho, d, choice).map_err(|e| e.to_string());
            MethodOutcome {
                method,
                result,
                elapsed: start.elapsed(),
            }
        })
        .collect();
    let ok: Vec<(Method, &RealMatrix)> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| (o.method, &r.h)))
        .collect();
    let mut deviations = Vec::new();
    for (x, &(ma, ha)) in ok.iter().enumerate() {
        for &(mb, hb) in &ok[x + 1..] {
            let relative = relative_deviation(ha, hb);
            deviations.push(PairDeviation {
                a: ma,
                b: mb,
                absolute: max_abs_real(&(ha - hb)),
                relative,
                flagged: relative > AGREEMENT_TOL,
            });
        }
    }
    ComparisonReport {
        rank_deficient: !rho.is_full_rank(),
        outcomes,
        deviations,
    }
}

/// `sum_ij H^{ij} x_i x_j`
pub fn quadratic_form(h: &RealMatrix, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += h[(i, j)] * x[i] * x[j];
        }
    }
    s
}
