//! Subproblem solvers selectable by name.

use std::collections::BTreeMap;

use gltr::oracle::{oracle_solve_metric, OracleError};
use gltr::{
    solve_st, DenseError, DenseGltr, DenseOptions, DenseProblem, SolveReport, TerminationConfig,
};
use nalgebra::DMatrix;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("unknown solver `{0}`")]
    Unknown(String),
}

/// Approximate minimizer of one trust-region subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemStep {
    pub x: Vec<f64>,
    /// Model value `q(x)`.
    pub obj: f64,
    pub lambda: f64,
    /// Hessian products spent by the session so far.
    pub hess_products: usize,
    pub converged: bool,
}

impl From<SolveReport> for SubproblemStep {
    fn from(r: SolveReport) -> Self {
        Self {
            converged: r.outcome.is_converged(),
            x: r.x,
            obj: r.obj,
            lambda: r.lambda,
            hess_products: r.hess_products,
        }
    }
}

/// Solver state bound to one `(H, g, M)`; the radius may change between
/// calls.
pub trait SubproblemSession {
    fn solve(&mut self) -> Result<SubproblemStep, SolverError>;
    /// Re-solves after a radius change.
    fn resolve(&mut self, delta: f64) -> Result<SubproblemStep, SolverError>;
}

pub trait SubproblemSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn session<'a>(&self, problem: DenseProblem<'a>) -> Result<Box<dyn SubproblemSession + 'a>, SolverError>;
}

/// GLTR with hotstart on radius changes.
#[derive(Debug, Clone, Default)]
pub struct GltrSolver {
    pub cfg: TerminationConfig,
    pub opts: DenseOptions,
}

struct GltrSession<'a> {
    inner: DenseGltr<'a>,
}

impl SubproblemSession for GltrSession<'_> {
    fn solve(&mut self) -> Result<SubproblemStep, SolverError> {
        Ok(self.inner.run()?.into())
    }

    fn resolve(&mut self, delta: f64) -> Result<SubproblemStep, SolverError> {
        Ok(self.inner.resolve_radius(delta)?.into())
    }
}

impl SubproblemSolver for GltrSolver {
    fn name(&self) -> &'static str {
        "gltr"
    }

    fn session<'a>(&self, problem: DenseProblem<'a>) -> Result<Box<dyn SubproblemSession + 'a>, SolverError> {
        let inner = DenseGltr::new(problem, self.cfg.clone(), self.opts.clone())?;
        Ok(Box::new(GltrSession { inner }))
    }
}

/// Steihaug–Toint; every radius change is a cold solve.
#[derive(Debug, Clone, Default)]
pub struct StSolver {
    pub cfg: TerminationConfig,
}

struct StSession<'a> {
    problem: DenseProblem<'a>,
    cfg: TerminationConfig,
    products: usize,
}

impl SubproblemSession for StSession<'_> {
    fn solve(&mut self) -> Result<SubproblemStep, SolverError> {
        let r = solve_st(self.problem, self.cfg.clone())?;
        self.products += r.hess_products;
        Ok(SubproblemStep {
            hess_products: self.products,
            ..r.into()
        })
    }

    fn resolve(&mut self, delta: f64) -> Result<SubproblemStep, SolverError> {
        self.problem.delta = delta;
        self.solve()
    }
}

impl SubproblemSolver for StSolver {
    fn name(&self) -> &'static str {
        "st"
    }

    fn session<'a>(&self, problem: DenseProblem<'a>) -> Result<Box<dyn SubproblemSession + 'a>, SolverError> {
        Ok(Box::new(StSession {
            problem,
            cfg: self.cfg.clone(),
            products: 0,
        }))
    }
}

/// Dense eigendecomposition; assembling `H` costs `n` products.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSolver;

struct OracleSession<'a> {
    problem: DenseProblem<'a>,
    h: DMatrix<f64>,
    m: DMatrix<f64>,
}

fn assemble(n: usize, apply: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        apply(&e, &mut col);
        e[j] = 0.0;
        a.set_column(j, &nalgebra::DVector::from_column_slice(&col));
    }
    0.5 * (&a + a.transpose())
}

impl SubproblemSession for OracleSession<'_> {
    fn solve(&mut self) -> Result<SubproblemStep, SolverError> {
        let s = oracle_solve_metric(&self.h, &self.m, self.problem.g, self.problem.delta)?;
        Ok(SubproblemStep {
            x: s.x,
            obj: s.obj,
            lambda: s.lambda,
            hess_products: self.h.ncols(),
            converged: true,
        })
    }

    fn resolve(&mut self, delta: f64) -> Result<SubproblemStep, SolverError> {
        self.problem.delta = delta;
        self.solve()
    }
}

impl SubproblemSolver for OracleSolver {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn session<'a>(&self, problem: DenseProblem<'a>) -> Result<Box<dyn SubproblemSession + 'a>, SolverError> {
        let n = problem.dim();
        let h = assemble(n, |x, y| problem.h.apply(x, y));
        let m = assemble(n, |x, y| problem.m.apply(x, y));
        Ok(Box::new(OracleSession { problem, h, m }))
    }
}

/// Name-keyed solver table.
pub struct Registry {
    solvers: BTreeMap<&'static str, Box<dyn SubproblemSolver>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    /// `gltr`, `st` and `oracle` with default settings.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(GltrSolver::default()));
        r.register(Box::new(StSolver::default()));
        r.register(Box::new(OracleSolver));
        r
    }

    /// Replaces any solver registered under the same name.
    pub fn register(&mut self, s: Box<dyn SubproblemSolver>) {
        self.solvers.insert(s.name(), s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SubproblemSolver, SolverError> {
        self.solvers
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| SolverError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}
