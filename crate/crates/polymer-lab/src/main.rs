//! Experiment runner CLI. Resolution order for every setting: flag,
//! then config file, then default; the worker count alone also honors
//! the POLYMER_LAB_WORKERS environment variable (between flag and
//! config). Exit status: 0 when every executed check passed or was
//! informational, 1 when a check failed, 2 on configuration or
//! execution errors (raised before any compute when detectable).

use clap::{Parser, Subcommand};
use polymer_lab::config::ExperimentConfig;
use polymer_lab::runner::{
    run_branching, run_certify, run_domination, run_replica, run_scan, run_verify, RunReport,
};
use polymer_lab::stats::TestFunction;
use polymer_lab::{Error, Result};
use std::path::PathBuf;

const WORKERS_ENV: &str = "POLYMER_LAB_WORKERS";

#[derive(Parser)]
#[command(
    name = "polymer-lab",
    version,
    about = "Simulation laboratory for product-structure martingales: \
             directed polymers, branching processes, and their moment certificates"
)]
struct Cli {
    /// Key=value experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; one seed reproduces an entire run byte for byte.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo replicates per grid cell.
    #[arg(long, global = true)]
    reps: Option<u64>,

    /// Polymer coupling grid, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    beta: Option<Vec<f64>>,

    /// Lattice dimension (1..=4).
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Path length / number of generations.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Output directory for results.csv, records.jsonl, report.txt.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: machine parallelism). Results do not
    /// depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Statistic list for scans, comma separated
    /// (mean, second-moment, second-moment-exact, moment:P, sup-tail:T, inf-tail:T).
    #[arg(long, global = true, value_delimiter = ',')]
    stat: Option<Vec<String>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid scan: one CSV row per (parameter, step) with the requested
    /// statistics.
    Scan,
    /// Oracle suite: brute force vs DP, collision recursion vs MC,
    /// branching closed forms, product identity, seed discipline.
    Verify,
    /// Convex domination tests of restarted ratios against fresh runs.
    Domination {
        /// Test functions, comma separated (x, x^2, x^4, exp:C, negramp:D,E).
        #[arg(long, default_value = "x^2,x^4", value_delimiter = ',')]
        functions: Vec<String>,
        /// Restart step.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Continuation length.
        #[arg(long, default_value_t = 5)]
        l: usize,
    },
    /// Moment certificates from measured tails, plus the
    /// strong-disorder floor report.
    Certify {
        /// Largest tail threshold tried (doubling from 2).
        #[arg(long, default_value_t = 64.0)]
        t_max: f64,
    },
    /// Exact second-moment computations over the beta grid.
    Replica,
    /// Branching-process oracle runs (GW and BRW).
    Branching,
}

fn resolve_workers(flag: Option<usize>, cfg: &ExperimentConfig) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w.max(1));
    }
    if let Ok(text) = std::env::var(WORKERS_ENV) {
        let w: usize = text.trim().parse().map_err(|_| {
            Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{text}'"))
        })?;
        if w == 0 {
            return Err(Error::Config(format!("{WORKERS_ENV} must be at least 1")));
        }
        return Ok(w);
    }
    if let Some(w) = cfg.workers {
        return Ok(w.max(1));
    }
    Ok(std::thread::available_parallelism().map_or(1, |p| p.get()))
}

fn run(cli: Cli) -> Result<RunReport> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.reps = reps;
    }
    if let Some(betas) = cli.beta.clone() {
        cfg.betas = betas;
    }
    if let Some(dim) = cli.dim {
        cfg.dim = dim;
    }
    if let Some(horizon) = cli.horizon {
        cfg.horizon = horizon;
    }
    if let Some(out) = cli.out.clone() {
        cfg.out_dir = out;
    }
    if let Some(stats) = &cli.stat {
        cfg.statistics = stats.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?;
    }
    let workers = resolve_workers(cli.workers, &cfg)?;
    cfg.workers = Some(workers);
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;

    match cli.command {
        Command::Scan => run_scan(&cfg),
        Command::Verify => run_verify(&cfg),
        Command::Domination { functions, k, l } => {
            let fns =
                functions.iter().map(|f| f.parse::<TestFunction>()).collect::<Result<Vec<_>>>()?;
            run_domination(&cfg, &fns, k, l)
        }
        Command::Certify { t_max } => run_certify(&cfg, t_max),
        Command::Replica => run_replica(&cfg),
        Command::Branching => run_branching(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            print!("{}", report.render_text());
            std::process::exit(if report.all_passed() { 0 } else { 1 });
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(2);
        }
    }
}
