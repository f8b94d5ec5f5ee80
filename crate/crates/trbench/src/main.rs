use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use trbench::bench::{read_records, run_grid, summary_csv, write_results};
use trbench::config::parse_config;
use trbench::control::control_problem;
use trbench::profile::{performance_profile, to_csv, ProfileMetric};
use trbench::suite::suite;
use trbench::{outer_loop, OuterConfig, Registry};

#[derive(Parser)]
#[command(name = "trbench", version, about = "Trust-region subproblem solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the outer trust-region method over a problem suite.
    Run {
        /// Suite name (only `standard` exists).
        #[arg(long, default_value = "standard")]
        suite: String,
        /// Comma-separated solvers: gltr, st, oracle.
        #[arg(long, value_delimiter = ',', default_value = "gltr,st")]
        solver: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// key=value file overriding the outer-loop parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute a performance profile from run records.
    Profile {
        #[arg(long, value_enum, default_value = "hv")]
        metric: ProfileMetric,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the 1-d control problem with GLTR.
    Control {
        #[arg(long, default_value_t = 128)]
        mesh: usize,
        #[arg(long, default_value_t = 1e-4)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "gltr")]
        solver: Vec<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let registry = Registry::standard();
    match cli.cmd {
        Cmd::Run {
            suite: name,
            solver,
            seed,
            max_outer,
            out,
            config,
        } => {
            if name != "standard" {
                bail!("unknown suite `{name}`");
            }
            let mut cfg = OuterConfig::default();
            if let Some(path) = config {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                cfg = parse_config(&text, cfg)?;
            }
            if let Some(m) = max_outer {
                cfg.max_outer = m;
            }
            cfg.validate()?;
            let problems = suite(seed)?;
            let results = run_grid(&problems, &registry, &solver, &cfg)?;
            write_results(&out, &results).with_context(|| format!("writing {}", out.display()))?;
            let records: Vec<_> = results.into_iter().map(|r| r.record).collect();
            print!("{}", summary_csv(&records));
        }
        Cmd::Profile { metric, input, out } => {
            let records = read_records(&input).with_context(|| format!("reading {}", input.display()))?;
            let points = performance_profile(&records, metric)?;
            fs::write(&out, to_csv(&points)).with_context(|| format!("writing {}", out.display()))?;
        }
        Cmd::Control { mesh, beta, solver } => {
            if mesh < 8 {
                bail!("mesh must be at least 8");
            }
            if !(beta > 0.0) {
                bail!("beta must be positive");
            }
            let p = control_problem(mesh, beta);
            let cfg = OuterConfig::default();
            let mut records = Vec::new();
            for s in &solver {
                records.push(outer_loop(&p, registry.get(s)?, &cfg).record);
            }
            print!("{}", summary_csv(&records));
        }
    }
    Ok(())
}
