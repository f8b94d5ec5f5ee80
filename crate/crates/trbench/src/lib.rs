//! Benchmark harness for trust-region subproblem solvers.
//!
//! A basic trust-region method ([`outer::outer_loop`]) drives a seeded
//! synthetic suite with any solver from the [`registry::Registry`]; results
//! feed [`profile`] for performance profiles.

pub mod bench;
pub mod config;
pub mod control;
pub mod outer;
pub mod problem;
pub mod profile;
pub mod registry;
pub mod suite;

pub use outer::{outer_loop, BenchRecord, OuterConfig, OuterResult, RunOutcome};
pub use problem::NlpProblem;
pub use registry::{Registry, SubproblemSession, SubproblemSolver, SubproblemStep};
