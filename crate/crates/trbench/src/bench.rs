//! Problem × solver grid execution and result files.

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::outer::{outer_loop, BenchRecord, OuterConfig, OuterResult};
use crate::problem::NlpProblem;
use crate::registry::{Registry, SolverError};

pub const SUMMARY_HEADER: &str = "problem,solver,grad_norm,hv_count,outer_iters,wall_ms,outcome";

/// Runs every problem with every named solver in parallel. Results come
/// back in grid order (problem-major).
pub fn run_grid(
    problems: &[NlpProblem],
    registry: &Registry,
    solvers: &[String],
    cfg: &OuterConfig,
) -> Result<Vec<OuterResult>, SolverError> {
    let chosen = solvers
        .iter()
        .map(|s| registry.get(s))
        .collect::<Result<Vec<_>, _>>()?;
    let grid: Vec<_> = problems
        .iter()
        .flat_map(|p| chosen.iter().map(move |s| (p, *s)))
        .collect();
    Ok(grid.par_iter().map(|(p, s)| outer_loop(p, *s, cfg)).collect())
}

pub fn summary_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:e},{},{},{:.3},{}\n",
            r.problem,
            r.solver,
            r.grad_norm,
            r.hv_count,
            r.outer_iters,
            r.wall_ms,
            r.outcome.as_str()
        ));
    }
    out
}

/// One `<problem>__<solver>.json` per record, its iterate trace next to it
/// and `summary.csv`.
pub fn write_results(dir: &Path, results: &[OuterResult]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for r in results {
        let stem = format!("{}__{}", r.record.problem, r.record.solver);
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&r.record)?)?;
        fs::write(dir.join(format!("{stem}.trace.json")), serde_json::to_string(&r.trace)?)?;
    }
    let records: Vec<BenchRecord> = results.iter().map(|r| r.record.clone()).collect();
    fs::write(dir.join("summary.csv"), summary_csv(&records))
}

/// Reads every record JSON (not traces) in `dir`.
pub fn read_records(dir: &Path) -> io::Result<Vec<BenchRecord>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && !p.to_string_lossy().ends_with(".trace.json")
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect()
}
