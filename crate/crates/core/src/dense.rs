//! In-memory driver for the reverse-communication solver, plus the
//! Steihaug–Toint truncated CG baseline.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::krylov::{Action, KrylovError, KrylovSolver, Outcome, Reply, TerminationConfig};
use crate::subproblem::{self, SolutionStatus, SubproblemError};
use crate::tridiag::TriMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("metric is not positive definite")]
    MetricNotPositiveDefinite,
    #[error("subspace full: no direction is M-orthogonal to the stored basis")]
    SubspaceFull,
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
}

/// Symmetric operator `x ↦ Hx`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Symmetric positive definite trust-region metric.
pub trait Metric: Sync {
    /// `y ← Mx`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y ← M⁻¹r`
    fn solve(&self, r: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMetric;

impl Metric for IdentityMetric {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    fn solve(&self, r: &[f64], y: &mut [f64]) {
        y.copy_from_slice(r);
    }
}

#[derive(Debug, Clone)]
pub struct DenseMatrix {
    m: DMatrix<f64>,
}

impl DenseMatrix {
    /// Accepts `m` if it is symmetric within `10⁻¹²·‖m‖`.
    pub fn new(m: DMatrix<f64>) -> Result<Self, DenseError> {
        if m.nrows() != m.ncols() {
            return Err(DenseError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
            return Err(DenseError::NotSymmetric(asym));
        }
        Ok(Self { m })
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let r = &self.m * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }
}

/// Operator given by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Dense SPD metric with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct DenseMetric {
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl DenseMetric {
    pub fn new(m: DMatrix<f64>) -> Result<Self, DenseError> {
        let chol = Cholesky::new(m.clone()).ok_or(DenseError::MetricNotPositiveDefinite)?;
        Ok(Self { m, chol })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl Metric for DenseMetric {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let r = &self.m * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }

    fn solve(&self, r: &[f64], y: &mut [f64]) {
        let s = self.chol.solve(&DVector::from_column_slice(r));
        y.copy_from_slice(s.as_slice());
    }
}

/// `TR(H, g, M, Δ)`.
#[derive(Clone, Copy)]
pub struct DenseProblem<'a> {
    pub h: &'a dyn LinearOperator,
    pub m: &'a dyn Metric,
    pub g: &'a [f64],
    pub delta: f64,
}

impl<'a> DenseProblem<'a> {
    pub fn new(h: &'a dyn LinearOperator, m: &'a dyn Metric, g: &'a [f64], delta: f64) -> Self {
        Self { h, m, g, delta }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn check(&self) -> Result<(), DenseError> {
        if self.h.dim() != self.g.len() {
            return Err(DenseError::DimensionMismatch {
                expected: self.h.dim(),
                got: self.g.len(),
            });
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(KrylovError::InvalidRadius(self.delta).into());
        }
        Ok(())
    }

    /// `½⟨x, Hx⟩ + ⟨g, x⟩`
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; x.len()];
        self.h.apply(x, &mut hx);
        0.5 * dot(x, &hx) + dot(self.g, x)
    }

    pub fn m_norm(&self, x: &[f64]) -> f64 {
        let mut mx = vec![0.0; x.len()];
        self.m.apply(x, &mut mx);
        dot(x, &mx).max(0.0).sqrt()
    }

    /// `‖(H + λM)x + g‖_{M⁻¹}`
    pub fn stationarity(&self, x: &[f64], lambda: f64) -> f64 {
        let n = x.len();
        let (mut hx, mut mx, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.h.apply(x, &mut hx);
        self.m.apply(x, &mut mx);
        let r: Vec<f64> = (0..n).map(|i| hx[i] + lambda * mx[i] + self.g[i]).collect();
        self.m.solve(&r, &mut z);
        dot(&r, &z).max(0.0).sqrt()
    }
}

/// When to open further Krylov blocks after an invariant subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exploration {
    Never,
    /// Only when the current solution touches the trust-region boundary.
    OnBoundary,
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOptions {
    pub seed: u64,
    pub explore: Exploration,
    /// Full reorthogonalization of Lanczos gradients against the stored
    /// basis.
    pub reorthogonalize: bool,
    pub lanczos_only: bool,
    /// Copy the basis into the report.
    pub keep_directions: bool,
}

impl Default for DenseOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            explore: Exploration::OnBoundary,
            reorthogonalize: true,
            lanczos_only: false,
            keep_directions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub obj: f64,
    pub status: Option<SolutionStatus>,
    /// Hessian products served so far (cumulative over reentries).
    pub hess_products: usize,
    pub iterations: usize,
    pub outcome: Outcome,
    pub gamma0: f64,
    /// `‖(H + λM)x + g‖_{M⁻¹}`, evaluated explicitly.
    pub stationarity: f64,
    /// `γᵢ₊₁|hᵢ|`, the driver's estimate of `stationarity`.
    pub residual_estimate: f64,
    pub tridiagonal: TriMatrix,
    pub lanczos_directions: Option<Vec<Vec<f64>>>,
    /// `gᵢ₊₁ = HQ − MQT` residual column (empty for Steihaug–Toint).
    pub next_gradient: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Two passes of modified Gram–Schmidt in the `M` inner product. `mbasis`
/// holds `Mq` for each `q` in `basis`.
fn mgs_project(w: &mut [f64], basis: &[Vec<f64>], mbasis: &[Vec<f64>]) {
    for _ in 0..2 {
        for (q, mq) in basis.iter().zip(mbasis) {
            let c = dot(w, mq);
            axpy(-c, q, w);
        }
    }
}

fn restart_from(
    basis: &[Vec<f64>],
    mbasis: &[Vec<f64>],
    m: &dyn Metric,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, DenseError> {
    if basis.len() >= n {
        return Err(DenseError::SubspaceFull);
    }
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut mw = vec![0.0; n];
    m.apply(&w, &mut mw);
    let before = dot(&w, &mw).sqrt();
    mgs_project(&mut w, basis, mbasis);
    m.apply(&w, &mut mw);
    let after = dot(&w, &mw).max(0.0).sqrt();
    if !(after > 1e-8 * before) {
        return Err(DenseError::SubspaceFull);
    }
    w.iter_mut().for_each(|x| *x /= after);
    Ok(w)
}

/// Seeded random unit vector (`‖v‖_M = 1`) `M`-orthogonal to the
/// `M`-orthonormal vectors `prev`.
pub fn mgs_restart(prev: &[Vec<f64>], m: &dyn Metric, n: usize, seed: u64) -> Result<Vec<f64>, DenseError> {
    let mprev: Vec<Vec<f64>> = prev
        .iter()
        .map(|q| {
            let mut mq = vec![0.0; n];
            m.apply(q, &mut mq);
            mq
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    restart_from(prev, &mprev, m, n, &mut rng)
}

/// Generalized Lanczos session over in-memory operators. Keeps the basis
/// so the solve can be re-entered with a new radius and the auxiliary
/// shifted problems can be retransformed.
pub struct DenseGltr<'a> {
    problem: DenseProblem<'a>,
    opts: DenseOptions,
    solver: KrylovSolver,
    first_action: Option<Action>,
    s: Vec<f64>,
    g: Vec<f64>,
    g_prev: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    hp: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<Vec<f64>>,
    mbasis: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    rng: ChaCha8Rng,
    restart: Option<Vec<f64>>,
    hess_products: usize,
}

impl<'a> DenseGltr<'a> {
    pub fn new(problem: DenseProblem<'a>, cfg: TerminationConfig, opts: DenseOptions) -> Result<Self, DenseError> {
        problem.check()?;
        let n = problem.dim();
        let cfg = TerminationConfig {
            max_iter: cfg.max_iter.or(Some(10 * n.max(1))),
            ..cfg
        };
        let (mut solver, first) = KrylovSolver::new(cfg, problem.delta)?;
        solver.set_lanczos_only(opts.lanczos_only);
        Ok(Self {
            problem,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            opts,
            solver,
            first_action: Some(first),
            s: vec![0.0; n],
            g: problem.g.to_vec(),
            g_prev: vec![0.0; n],
            v: vec![0.0; n],
            p: vec![0.0; n],
            hp: vec![0.0; n],
            x: vec![0.0; n],
            basis: Vec::new(),
            mbasis: Vec::new(),
            scratch: vec![0.0; n],
            restart: None,
            hess_products: 0,
        })
    }

    pub fn solver(&self) -> &KrylovSolver {
        &self.solver
    }

    /// Conjugate-gradient iterate `s` (meaningful while no crossover to
    /// Lanczos has happened).
    pub fn cg_iterate(&self) -> &[f64] {
        &self.s
    }

    /// Runs to completion.
    pub fn run(&mut self) -> Result<SolveReport, DenseError> {
        let action = self.first_action.take().ok_or(KrylovError::InvalidReentry)?;
        let outcome = self.drive(action)?;
        Ok(self.report(outcome))
    }

    /// Re-solves with a new radius, resuming iterations if needed.
    pub fn resolve_radius(&mut self, delta: f64) -> Result<SolveReport, DenseError> {
        self.problem.delta = delta;
        let action = self.solver.reenter_radius(delta)?;
        let outcome = self.drive(action)?;
        Ok(self.report(outcome))
    }

    fn retransform(&self, h: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.dim()];
        for (hj, q) in h.iter().zip(&self.basis) {
            axpy(*hj, q, &mut x);
        }
        x
    }

    /// Minimizer of the model with the fixed shift `λ` over the explored
    /// Krylov space.
    pub fn trace_shifted_min(&self, lambda: f64) -> Result<Vec<f64>, DenseError> {
        let h = subproblem::trace_shifted_min(self.solver.tridiagonal(), self.solver.gamma0(), lambda)?;
        Ok(self.retransform(&h))
    }

    /// `λ` and `x(λ)` with `λ/‖x(λ)‖_M ∈ [σ_l, σ_u]` over the explored space.
    pub fn trace_band(&self, sigma_l: f64, sigma_u: f64) -> Result<(f64, Vec<f64>), DenseError> {
        let (lambda, h) =
            subproblem::trace_band(self.solver.tridiagonal(), self.solver.gamma0(), sigma_l, sigma_u)?;
        Ok((lambda, self.retransform(&h)))
    }

    fn should_explore(&self) -> bool {
        if self.basis.len() >= self.problem.dim() {
            return false;
        }
        match self.opts.explore {
            Exploration::Never => false,
            Exploration::Always => true,
            Exploration::OnBoundary => self.solver.solution().is_some_and(|s| {
                let nh = s.h.iter().map(|v| v * v).sum::<f64>().sqrt();
                nh >= (1.0 - 1e-8) * self.problem.delta
            }),
        }
    }

    fn precondition(&mut self) -> f64 {
        self.problem.m.solve(&self.g, &mut self.v);
        dot(&self.g, &self.v)
    }

    fn drive(&mut self, mut action: Action) -> Result<Outcome, DenseError> {
        let n = self.problem.dim();
        loop {
            let reply = match action {
                Action::Done(outcome) => {
                    if outcome == Outcome::HardCaseInvariantSubspace && self.should_explore() {
                        if let Ok(w) = restart_from(&self.basis, &self.mbasis, self.problem.m, n, &mut self.rng) {
                            self.restart = Some(w);
                            action = self.solver.request_new_krylov()?;
                            continue;
                        }
                    }
                    return Ok(outcome);
                }
                Action::InitPrecond => {
                    self.g.copy_from_slice(self.problem.g);
                    Reply::Dot(self.precondition())
                }
                Action::StoreBasis { scale } => {
                    self.basis.push(self.v.iter().map(|x| scale * x).collect());
                    self.mbasis.push(self.g.iter().map(|x| scale * x).collect());
                    Reply::Ack
                }
                Action::CgDir { beta } => {
                    for (p, v) in self.p.iter_mut().zip(&self.v) {
                        *p = -v + beta * *p;
                    }
                    Reply::Ack
                }
                Action::HessProd => {
                    self.problem.h.apply(&self.p, &mut self.hp);
                    self.hess_products += 1;
                    self.problem.m.apply(&self.p, &mut self.scratch);
                    Reply::Curvature {
                        php: dot(&self.p, &self.hp),
                        pmp: dot(&self.p, &self.scratch),
                    }
                }
                Action::CgUpdate { alpha } => {
                    axpy(alpha, &self.p, &mut self.s);
                    self.g_prev.copy_from_slice(&self.g);
                    axpy(alpha, &self.hp, &mut self.g);
                    if self.opts.reorthogonalize {
                        mgs_project(&mut self.g, &self.mbasis, &self.basis);
                    }
                    Reply::Dot(self.precondition())
                }
                Action::LanczosDir { scale } => {
                    for (p, v) in self.p.iter_mut().zip(&self.v) {
                        *p = scale * v;
                    }
                    Reply::Ack
                }
                Action::LanczosGrad { c_g, c_gprev } => {
                    for i in 0..n {
                        self.scratch[i] = self.hp[i] - c_g * self.g[i] - c_gprev * self.g_prev[i];
                    }
                    std::mem::swap(&mut self.g_prev, &mut self.g);
                    std::mem::swap(&mut self.g, &mut self.scratch);
                    if self.opts.reorthogonalize {
                        // g is dual: remove ⟨q, g⟩ along Mq.
                        mgs_project(&mut self.g, &self.mbasis, &self.basis);
                    }
                    Reply::Dot(self.precondition())
                }
                Action::Retransform { ref h } => {
                    self.x = self.retransform(h);
                    Reply::Ack
                }
                Action::NewKrylov => {
                    let w = self.restart.take().ok_or(DenseError::SubspaceFull)?;
                    self.problem.m.apply(&w, &mut self.g);
                    self.v = w;
                    Reply::Dot(dot(&self.v, &self.g))
                }
                Action::ObjValue => Reply::Objective(self.problem.objective(&self.x)),
            };
            action = self.solver.step(reply)?;
        }
    }

    fn report(&self, outcome: Outcome) -> SolveReport {
        let sol = self.solver.solution();
        let lambda = sol.map_or(0.0, |s| s.lambda);
        let scale = self.solver.next_gradient_scale();
        SolveReport {
            x: self.x.clone(),
            lambda,
            obj: self.problem.objective(&self.x),
            status: sol.map(|s| s.status),
            hess_products: self.hess_products,
            iterations: self.solver.iterations(),
            outcome,
            gamma0: self.solver.gamma0(),
            stationarity: self.problem.stationarity(&self.x, lambda),
            residual_estimate: self.solver.residual_estimate(),
            tridiagonal: self.solver.tridiagonal().clone(),
            lanczos_directions: self.opts.keep_directions.then(|| self.basis.clone()),
            next_gradient: self.g.iter().map(|v| scale * v).collect(),
        }
    }
}

/// Solves `TR(H, g, M, Δ)` with the generalized Lanczos method and default
/// options.
pub fn solve_gltr(problem: DenseProblem<'_>, cfg: TerminationConfig) -> Result<SolveReport, DenseError> {
    solve_gltr_with(problem, cfg, DenseOptions::default())
}

pub fn solve_gltr_with(
    problem: DenseProblem<'_>,
    cfg: TerminationConfig,
    opts: DenseOptions,
) -> Result<SolveReport, DenseError> {
    DenseGltr::new(problem, cfg, opts)?.run()
}

/// Positive root `τ` of `‖s + τp‖_M = Δ` given `⟨s,Ms⟩`, `⟨s,Mp⟩`, `⟨p,Mp⟩`.
fn boundary_step(sms: f64, smp: f64, pmp: f64, delta: f64) -> f64 {
    let c = sms - delta * delta;
    let disc = (smp * smp - pmp * c).max(0.0).sqrt();
    if smp >= 0.0 {
        -c / (smp + disc)
    } else {
        (disc - smp) / pmp
    }
}

/// Steihaug–Toint truncated conjugate gradients.
pub fn solve_st(problem: DenseProblem<'_>, cfg: TerminationConfig) -> Result<SolveReport, DenseError> {
    problem.check()?;
    cfg.validate()?;
    let n = problem.dim();
    let delta = problem.delta;
    let max_iter = cfg.max_iter.unwrap_or(10 * n.max(1));
    let mut s = vec![0.0; n];
    let mut hs = vec![0.0; n];
    let mut g = problem.g.to_vec();
    let mut v = vec![0.0; n];
    problem.m.solve(&g, &mut v);
    let mut gv = dot(&g, &v);
    if gv < 0.0 {
        return Err(KrylovError::PreconditionerIndefinite(gv).into());
    }
    let gamma0 = gv.sqrt();
    let mut p: Vec<f64> = v.iter().map(|x| -x).collect();
    let mut hp = vec![0.0; n];
    let (mut ms, mut mp) = (vec![0.0; n], vec![0.0; n]);
    let mut hess_products = 0;
    let mut iterations = 0;
    let mut outcome = Outcome::MaxIter;
    let mut on_boundary = false;

    if gv == 0.0 {
        outcome = Outcome::InteriorConverged;
    }
    while outcome == Outcome::MaxIter && iterations < max_iter {
        iterations += 1;
        problem.h.apply(&p, &mut hp);
        hess_products += 1;
        let php = dot(&p, &hp);
        problem.m.apply(&s, &mut ms);
        problem.m.apply(&p, &mut mp);
        let (sms, smp, pmp) = (dot(&s, &ms), dot(&s, &mp), dot(&p, &mp));
        let alpha = gv / php;
        let crosses = php <= 0.0 || sms + 2.0 * alpha * smp + alpha * alpha * pmp >= delta * delta;
        if crosses {
            let tau = boundary_step(sms, smp, pmp, delta);
            axpy(tau, &p, &mut s);
            axpy(tau, &hp, &mut hs);
            on_boundary = true;
            outcome = Outcome::BoundaryConverged;
            break;
        }
        axpy(alpha, &p, &mut s);
        axpy(alpha, &hp, &mut hs);
        axpy(alpha, &hp, &mut g);
        problem.m.solve(&g, &mut v);
        let gv_new = dot(&g, &v);
        if !gv_new.is_finite() || gv_new < 0.0 {
            outcome = Outcome::NumericalFailure;
            break;
        }
        if gv_new.sqrt() <= cfg.interior_tol(gamma0) {
            outcome = Outcome::InteriorConverged;
            break;
        }
        let beta = gv_new / gv;
        gv = gv_new;
        for (pi, vi) in p.iter_mut().zip(&v) {
            *pi = -vi + beta * *pi;
        }
    }

    let lambda = if on_boundary {
        problem.m.apply(&s, &mut ms);
        let r: f64 = dot(&s, &hs) + dot(&s, problem.g);
        (-r / dot(&s, &ms)).max(0.0)
    } else {
        0.0
    };
    let obj = 0.5 * dot(&s, &hs) + dot(problem.g, &s);
    Ok(SolveReport {
        stationarity: problem.stationarity(&s, lambda),
        x: s,
        lambda,
        obj,
        status: Some(if on_boundary {
            SolutionStatus::Boundary
        } else {
            SolutionStatus::Interior
        }),
        hess_products,
        iterations,
        outcome,
        gamma0,
        residual_estimate: if on_boundary { f64::NAN } else { gv.sqrt() },
        tridiagonal: TriMatrix::default(),
        lanczos_directions: None,
        next_gradient: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_solve;

    fn tight() -> TerminationConfig {
        TerminationConfig::tight(1e-12)
    }

    #[test]
    fn identity_one_product() {
        let h = DenseMatrix::from_diagonal(&[1.0; 4]);
        let g = [1.0, -2.0, 0.5, 3.0];
        let p = DenseProblem::new(&h, &IdentityMetric, &g, 10.0);
        let r = solve_gltr(p, TerminationConfig::default()).unwrap();
        assert_eq!(r.hess_products, 1);
        assert_eq!(r.lambda, 0.0);
        for (x, gi) in r.x.iter().zip(&g) {
            assert!((x + gi).abs() < 1e-15);
        }
    }

    #[test]
    fn hard_case_pipeline() {
        let h = DenseMatrix::from_diagonal(&[1.0, -2.0]);
        let g = [1.0, 0.0];
        let p = DenseProblem::new(&h, &IdentityMetric, &g, 1.0);
        let r = solve_gltr(p, tight()).unwrap();
        assert!((r.x[0] + 1.0 / 3.0).abs() < 1e-12);
        assert!((r.x[1].abs() - 8f64.sqrt() / 3.0).abs() < 1e-12);
        assert!((r.obj + 7.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.status, Some(SolutionStatus::HardCase));
    }

    #[test]
    fn random_indefinite_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 30;
        let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let hm = 0.5 * (&a + a.transpose());
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = DenseMatrix::new(hm.clone()).unwrap();
        let r = solve_gltr(DenseProblem::new(&h, &IdentityMetric, &g, 1.0), tight()).unwrap();
        let o = oracle_solve(&hm, &g, 1.0).unwrap();
        assert!((r.obj - o.obj).abs() <= 1e-6 * o.obj.abs(), "{} vs {}", r.obj, o.obj);
    }

    #[test]
    fn st_examples() {
        let h = DenseMatrix::from_diagonal(&[1.0, 2.0, 5.0]);
        let g = [1.0, 1.0, 1.0];
        let p = DenseProblem::new(&h, &IdentityMetric, &g, 10.0);
        let a = solve_st(p, tight()).unwrap();
        let b = solve_gltr(p, tight()).unwrap();
        for (x, y) in a.x.iter().zip(&b.x) {
            assert!((x - y).abs() < 1e-8);
        }

        let h = DenseMatrix::from_diagonal(&[-1.0, 2.0]);
        let g = [1.0, 0.0];
        let r = solve_st(DenseProblem::new(&h, &IdentityMetric, &g, 2.0), tight()).unwrap();
        assert_eq!(r.hess_products, 1);
        assert!((r.x[0] + 2.0).abs() < 1e-15 && r.x[1] == 0.0);
        assert_eq!(r.outcome, Outcome::BoundaryConverged);
    }

    #[test]
    fn mgs_examples() {
        let e1 = vec![1.0, 0.0, 0.0];
        let v = mgs_restart(&[e1], &IdentityMetric, 3, 4).unwrap();
        assert!(v[0].abs() < 1e-15);
        assert!((dot(&v, &v) - 1.0).abs() < 1e-14);
        let full = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(mgs_restart(&full, &IdentityMetric, 2, 4), Err(DenseError::SubspaceFull));
    }

    #[test]
    fn metric_must_be_spd() {
        assert!(DenseMetric::new(DMatrix::from_diagonal_element(2, 2, -1.0)).is_err());
        assert!(matches!(
            DenseMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(DenseError::NotSymmetric(_))
        ));
    }
}
