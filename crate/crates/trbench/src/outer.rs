//! Basic trust-region method for unconstrained minimization.

use std::time::Instant;

use gltr::{DenseProblem, FnOperator, IdentityMetric, Metric};
use serde::{Deserialize, Serialize};

use crate::problem::{dot, NlpProblem};
use crate::registry::{SubproblemSolver, SubproblemStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    /// `None` selects `1/√n` unless the problem provides its own radius.
    pub delta0: Option<f64>,
    pub tol_abs: f64,
    pub rho_acc: f64,
    pub rho_inc: f64,
    pub gamma_inc: f64,
    pub gamma_dec: f64,
    pub max_outer: usize,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            delta0: None,
            tol_abs: 1e-7,
            rho_acc: 1e-2,
            rho_inc: 0.95,
            gamma_inc: 2.0,
            gamma_dec: 0.5,
            max_outer: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid outer configuration: {0}")]
pub struct ConfigError(pub &'static str);

impl OuterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ConfigError("delta0 must be positive"));
            }
        }
        if !(self.tol_abs >= 0.0) {
            return Err(ConfigError("tol_abs must be nonnegative"));
        }
        if !(0.0 < self.rho_acc && self.rho_acc <= self.rho_inc && self.rho_inc < 1.0) {
            return Err(ConfigError("need 0 < rho_acc <= rho_inc < 1"));
        }
        if !(0.0 < self.gamma_dec && self.gamma_dec < 1.0 && self.gamma_inc > 1.0) {
            return Err(ConfigError("need 0 < gamma_dec < 1 < gamma_inc"));
        }
        if self.max_outer == 0 {
            return Err(ConfigError("max_outer must be positive"));
        }
        Ok(())
    }

    pub fn initial_radius(&self, p: &NlpProblem) -> f64 {
        self.delta0
            .or(p.delta0)
            .unwrap_or(1.0 / (p.n as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunOutcome {
    Converged,
    IterationLimit,
    AscentFailure,
    SolverFailure,
}

impl RunOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RunOutcome::Converged => "converged",
            RunOutcome::IterationLimit => "iteration-limit",
            RunOutcome::AscentFailure => "ascent-failure",
            RunOutcome::SolverFailure => "solver-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub problem: String,
    pub solver: String,
    pub grad_norm: f64,
    pub hv_count: usize,
    pub outer_iters: usize,
    pub wall_ms: f64,
    pub outcome: RunOutcome,
}

/// One pass through the loop body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub delta: f64,
    /// `‖d‖_M` of the trial step.
    pub step_norm: f64,
    pub model: f64,
    pub rho: f64,
    pub accepted: bool,
    /// Hotstart re-solve after a rejection.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub record: BenchRecord,
    pub trace: Vec<IterRecord>,
    pub x: Vec<f64>,
    pub f: f64,
}

/// Trust-region subproblem handed to a solver, for inspection.
pub struct SubproblemEvent<'a, 'b> {
    pub iter: usize,
    pub problem: DenseProblem<'a>,
    pub step: &'b SubproblemStep,
}

pub fn outer_loop(p: &NlpProblem, solver: &dyn SubproblemSolver, cfg: &OuterConfig) -> OuterResult {
    outer_loop_observed(p, solver, cfg, &mut |_| {})
}

/// Like [`outer_loop`], calling `observe` after every subproblem solve.
pub fn outer_loop_observed(
    p: &NlpProblem,
    solver: &dyn SubproblemSolver,
    cfg: &OuterConfig,
    observe: &mut dyn FnMut(&SubproblemEvent<'_, '_>),
) -> OuterResult {
    let start = Instant::now();
    let mut x = p.x0.clone();
    let mut fx = p.value(&x);
    let mut delta = cfg.initial_radius(p);
    let mut trace = Vec::new();
    let mut hv = 0;
    let mut k = 0;
    let identity = IdentityMetric;
    let metric: &dyn Metric = match &p.metric {
        Some(m) => m.as_ref(),
        None => &identity,
    };

    let mut g = p.gradient(&x);
    let mut gnorm = p.dual_norm(&g);
    let outcome = loop {
        if gnorm <= cfg.tol_abs {
            break RunOutcome::Converged;
        }
        if k >= cfg.max_outer {
            break RunOutcome::IterationLimit;
        }
        let xk = x.clone();
        let hop = FnOperator::new(p.n, |v: &[f64], out: &mut [f64]| (p.hess_vec)(&xk, v, out));
        let sub = DenseProblem::new(&hop, metric, &g, delta);
        let mut session = match solver.session(sub) {
            Ok(s) => s,
            Err(_) => break RunOutcome::SolverFailure,
        };
        let mut result = session.solve();
        let mut resolved = false;
        let mut used = 0;
        let inner = loop {
            let step = match result {
                Ok(s) => s,
                Err(_) => break Some(RunOutcome::SolverFailure),
            };
            used = step.hess_products;
            observe(&SubproblemEvent {
                iter: k,
                problem: DenseProblem::new(&hop, metric, &g, delta),
                step: &step,
            });
            let mut mx = vec![0.0; p.n];
            metric.apply(&step.x, &mut mx);
            let step_norm = dot(&step.x, &mx).max(0.0).sqrt();
            if !(step.obj < 0.0) {
                trace.push(IterRecord {
                    iter: k,
                    f: fx,
                    grad_norm: gnorm,
                    delta,
                    step_norm,
                    model: step.obj,
                    rho: f64::NAN,
                    accepted: false,
                    resolved,
                });
                break Some(RunOutcome::AscentFailure);
            }
            let trial: Vec<f64> = x.iter().zip(&step.x).map(|(a, b)| a + b).collect();
            let ft = p.value(&trial);
            let rho = (ft - fx) / step.obj;
            let accepted = rho >= cfg.rho_acc;
            trace.push(IterRecord {
                iter: k,
                f: fx,
                grad_norm: gnorm,
                delta,
                step_norm,
                model: step.obj,
                rho,
                accepted,
                resolved,
            });
            k += 1;
            if accepted {
                if rho >= cfg.rho_inc {
                    delta *= cfg.gamma_inc;
                }
                x = trial;
                fx = ft;
                break None;
            }
            delta *= cfg.gamma_dec;
            if k >= cfg.max_outer {
                break Some(RunOutcome::IterationLimit);
            }
            resolved = true;
            result = session.resolve(delta);
        };
        hv += used;
        drop(session);
        if let Some(o) = inner {
            break o;
        }
        g = p.gradient(&x);
        gnorm = p.dual_norm(&g);
    };

    OuterResult {
        record: BenchRecord {
            problem: p.name.clone(),
            solver: solver.name().to_string(),
            grad_norm: gnorm,
            hv_count: hv,
            outer_iters: k,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            outcome,
        },
        trace,
        x,
        f: fx,
    }
}
