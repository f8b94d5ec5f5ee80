//! Extended performance profiles.
//!
//! `r_{s,p} = t_{s,p} / min_{σ≠s} t_{σ,p}` and `ρ_s(τ)` is the fraction of
//! problems with `r_{s,p} ≤ τ`. Failures carry `t = ∞`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::outer::{BenchRecord, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ProfileMetric {
    Hv,
    Time,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("no records")]
    Empty,
    #[error("need at least two solvers, got {0}")]
    TooFewSolvers(usize),
    #[error("negative or NaN cost {cost} for {solver} on {problem}")]
    BadCost { problem: String, solver: String, cost: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub tau: f64,
    pub solver: String,
    pub rho: f64,
}

/// Costs indexed by problem, then solver.
pub type CostTable = BTreeMap<String, BTreeMap<String, f64>>;

pub fn cost_table(records: &[BenchRecord], metric: ProfileMetric) -> CostTable {
    let mut t = CostTable::new();
    for r in records {
        let cost = if r.outcome != RunOutcome::Converged {
            f64::INFINITY
        } else {
            match metric {
                ProfileMetric::Hv => r.hv_count as f64,
                ProfileMetric::Time => r.wall_ms,
            }
        };
        t.entry(r.problem.clone()).or_default().insert(r.solver.clone(), cost);
    }
    t
}

fn ratio(t: f64, best_other: f64) -> f64 {
    if t.is_infinite() {
        f64::INFINITY
    } else if best_other == 0.0 {
        if t == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        t / best_other
    }
}

/// Performance ratios per solver, one entry per problem (missing runs count
/// as failures).
pub fn ratios(table: &CostTable) -> Result<BTreeMap<String, Vec<f64>>, ProfileError> {
    if table.is_empty() {
        return Err(ProfileError::Empty);
    }
    let solvers: BTreeSet<&String> = table.values().flat_map(|m| m.keys()).collect();
    if solvers.len() < 2 {
        return Err(ProfileError::TooFewSolvers(solvers.len()));
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (problem, row) in table {
        for (solver, cost) in row {
            if cost.is_nan() || *cost < 0.0 {
                return Err(ProfileError::BadCost {
                    problem: problem.clone(),
                    solver: solver.clone(),
                    cost: *cost,
                });
            }
        }
        let cost = |s: &String| row.get(s).copied().unwrap_or(f64::INFINITY);
        for s in &solvers {
            let best_other = solvers
                .iter()
                .filter(|o| *o != s)
                .map(|o| cost(o))
                .fold(f64::INFINITY, f64::min);
            out.entry((*s).clone()).or_default().push(ratio(cost(s), best_other));
        }
    }
    Ok(out)
}

/// `ρ(τ)` for one solver's ratios.
pub fn rho_at(ratios: &[f64], tau: f64) -> f64 {
    ratios.iter().filter(|r| **r <= tau).count() as f64 / ratios.len() as f64
}

/// Step points at every distinct finite ratio, then `τ = ∞` giving the
/// solved fraction.
pub fn profile(table: &CostTable) -> Result<Vec<ProfilePoint>, ProfileError> {
    let r = ratios(table)?;
    let mut taus: Vec<f64> = r.values().flatten().copied().filter(|v| v.is_finite()).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut points = Vec::new();
    for (solver, rs) in &r {
        let n = rs.len() as f64;
        for &tau in &taus {
            points.push(ProfilePoint {
                tau,
                solver: solver.clone(),
                rho: rho_at(rs, tau),
            });
        }
        let solved = table
            .values()
            .filter(|row| row.get(solver).is_some_and(|c| c.is_finite()))
            .count() as f64;
        points.push(ProfilePoint {
            tau: f64::INFINITY,
            solver: solver.clone(),
            rho: solved / n,
        });
    }
    Ok(points)
}

pub fn performance_profile(records: &[BenchRecord], metric: ProfileMetric) -> Result<Vec<ProfilePoint>, ProfileError> {
    profile(&cost_table(records, metric))
}

/// `tau,solver,rho` CSV.
pub fn to_csv(points: &[ProfilePoint]) -> String {
    let mut s = String::from("tau,solver,rho\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.tau, p.solver, p.rho));
    }
    s
}
