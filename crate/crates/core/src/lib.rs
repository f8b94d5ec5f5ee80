//! Trust-region subproblem solver built on the generalized Lanczos method.
//!
//! The core ([`krylov`]) is a reverse-communication state machine that only
//! ever sees scalars: dot products and axpy coefficients. All vectors live
//! with the caller. [`dense`] drives that machine over in-memory operators,
//! and [`oracle`] is a brute-force eigendecomposition reference used for
//! verification.

pub mod dense;
pub mod krylov;
pub mod oracle;
pub mod subproblem;
pub mod tridiag;

pub use dense::{
    mgs_restart, solve_gltr, solve_gltr_with, solve_st, DenseError, DenseGltr, DenseMatrix,
    DenseMetric, DenseOptions, DenseProblem, Exploration, FnOperator, IdentityMetric,
    LinearOperator, Metric, SolveReport,
};
pub use krylov::{Action, KrylovError, KrylovSolver, Outcome, Phase, Reply, TerminationConfig};
pub use subproblem::{SolutionStatus, SubproblemSolution, WarmStart};
pub use tridiag::{LdlFactor, TriError, TriMatrix};
