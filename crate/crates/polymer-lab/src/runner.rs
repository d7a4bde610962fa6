//! Subcommand implementations behind the CLI. Each run builds a
//! `RunReport` of named checks, writes its artifacts under the
//! configured output directory, and leaves the exit-status decision to
//! the caller: zero iff every check passed or was informational.

use crate::accum::RunningMoments;
use crate::branching::{
    brw_martingale_path, extinction_prob_by, gw_martingale_path, gw_second_moment_exact,
    gw_second_moment_limit, BrwSpec,
};
use crate::config::{ExperimentConfig, ModelKind, StatKind};
use crate::polymer::{brute_force_log_partition, EnvField, MartingalePath, PolymerModel};
use crate::records::{fmt_f64, write_jsonl, CsvTable, StatRecord};
use crate::replica::{
    collision_exponent, collision_return_prob, l2_critical_beta, second_moment_exact,
};
use crate::rng::SeedStream;
use crate::stats::{
    domination_test, estimate_inf_tail, estimate_moment, estimate_sup_tail, lp_certificate,
    neg_moment_certificate, powv, strong_disorder_bound_check, BrwSampler, Certificate,
    CertificateStatus, GwSampler, PathSampler, PolymerSampler, TailEstimate, TestFunction, Verdict,
};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

/// Pinned tolerances for the oracle suite.
const DP_VS_BRUTE_TOL: f64 = 1e-10;
const PRODUCT_IDENTITY_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-12;

/// Replicates per parallel work unit during scans; fixed so results
/// are a pure function of the replicate ids.
const SCAN_BLOCK: u64 = 1024;

/// One named verification or measurement outcome.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Informational checks report without affecting the exit status.
    pub informational: bool,
    pub detail: String,
}

/// Everything needed to reproduce and judge one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub workers: usize,
    pub wall_clock_secs: f64,
    /// Canonical config text; parsing it reproduces the run.
    pub config_echo: String,
    pub checks: Vec<CheckOutcome>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    fn new(command: &str, cfg: &ExperimentConfig) -> RunReport {
        RunReport {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: cfg.master_seed,
            workers: rayon::current_num_threads(),
            wall_clock_secs: 0.0,
            config_echo: cfg.canonical_text(),
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckOutcome {
            name: name.into(),
            passed,
            informational: false,
            detail: detail.into(),
        });
    }

    fn info(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.checks.push(CheckOutcome {
            name: name.into(),
            passed: true,
            informational: true,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }

    /// The report.txt content.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("polymer-lab {} report\n", self.command));
        out.push_str(&format!("version: {}\n", self.version));
        out.push_str(&format!("seed: {}\n", self.master_seed));
        out.push_str(&format!("workers: {}\n", self.workers));
        out.push_str(&format!("wall_clock_secs: {:.3}\n", self.wall_clock_secs));
        out.push_str("config:\n");
        for line in self.config_echo.lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("checks:\n");
        for c in &self.checks {
            let tag = if c.informational {
                "info"
            } else if c.passed {
                "pass"
            } else {
                "FAIL"
            };
            out.push_str(&format!("  [{tag}] {}: {}\n", c.name, c.detail));
        }
        if !self.artifacts.is_empty() {
            out.push_str("artifacts:\n");
            for a in &self.artifacts {
                out.push_str(&format!("  {}\n", a.display()));
            }
        }
        out.push_str(&format!("status: {}\n", if self.all_passed() { "PASS" } else { "FAIL" }));
        out
    }

    /// Writes report.txt and stamps the wall clock; the final step of
    /// every subcommand.
    fn finish(mut self, cfg: &ExperimentConfig, started: Instant) -> Result<RunReport> {
        self.wall_clock_secs = started.elapsed().as_secs_f64();
        fs::create_dir_all(&cfg.out_dir)?;
        let path = cfg.out_dir.join("report.txt");
        fs::write(&path, self.render_text())?;
        self.artifacts.push(path);
        Ok(self)
    }
}

/// The per-cell scan grid: polymer scans its beta grid, the branching
/// models are single-cell with their natural parameter echoed.
fn cell_params(cfg: &ExperimentConfig) -> Vec<f64> {
    match cfg.model {
        ModelKind::Polymer => cfg.betas.clone(),
        ModelKind::Gw => vec![cfg.offspring.mean],
        ModelKind::Brw => vec![cfg.theta],
    }
}

fn cell_sampler(
    cfg: &ExperimentConfig,
    param: f64,
    base: SeedStream,
) -> Result<Box<dyn PathSampler>> {
    Ok(match cfg.model {
        ModelKind::Polymer => {
            Box::new(PolymerSampler::new(cfg.dist.clone(), param, cfg.dim, cfg.horizon, base)?)
        }
        ModelKind::Gw => Box::new(GwSampler::new(cfg.offspring.clone(), cfg.horizon, base)),
        ModelKind::Brw => Box::new(BrwSampler::new(
            BrwSpec::new(cfg.offspring.clone(), cfg.dist.clone(), cfg.theta)?,
            cfg.horizon,
            base,
        )),
    })
}

/// Rejects statistic/model combinations that cannot work before any
/// replicate is sampled.
fn precheck_statistics(cfg: &ExperimentConfig) -> Result<()> {
    for stat in &cfg.statistics {
        match *stat {
            StatKind::Moment { p } if p < 0.0 => {
                let positive = match cfg.model {
                    ModelKind::Polymer => cfg
                        .dist
                        .atoms()
                        .is_none_or(|atoms| atoms.iter().all(|&(v, _)| v.is_finite())),
                    ModelKind::Gw | ModelKind::Brw => cfg.offspring.min_count() >= 1,
                };
                if !positive {
                    return Err(Error::Unsupported(format!(
                        "negative moment {p} needs a strictly positive martingale; \
                         the configured {} can hit zero",
                        cfg.model
                    )));
                }
            }
            StatKind::SecondMomentExact => match cfg.model {
                ModelKind::Polymer => {
                    for &beta in &cfg.betas {
                        collision_exponent(&cfg.dist, beta)?;
                    }
                }
                ModelKind::Gw => {
                    if cfg.offspring.mean <= 1.0 {
                        return Err(Error::Unsupported(
                            "exact gw second moment needs mean offspring > 1".into(),
                        ));
                    }
                }
                ModelKind::Brw => {
                    return Err(Error::Unsupported(
                        "second-moment-exact is available for polymer and gw models only".into(),
                    ));
                }
            },
            _ => {}
        }
    }
    Ok(())
}

/// Exact (non-MC) readout for one statistic column, if this statistic
/// has one.
fn exact_value(cfg: &ExperimentConfig, param: f64, n: usize) -> Result<f64> {
    match cfg.model {
        ModelKind::Polymer => second_moment_exact(&cfg.dist, param, n, cfg.dim),
        ModelKind::Gw => {
            if n == 0 {
                Ok(1.0)
            } else {
                gw_second_moment_exact(&cfg.offspring, n)
            }
        }
        ModelKind::Brw => Err(Error::Unsupported(
            "second-moment-exact is available for polymer and gw models only".into(),
        )),
    }
}

/// Mergeable per-cell accumulation state: one moment accumulator per
/// (statistic, step). Tail statistics push indicators, so their hit
/// counts come back exactly via `total()`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CellState {
    done: u64,
    per_stat: Vec<Vec<RunningMoments>>,
}

impl CellState {
    fn new(stats: &[StatKind], horizon: usize) -> CellState {
        let per_stat = stats
            .iter()
            .map(|s| {
                if matches!(s, StatKind::SecondMomentExact) {
                    Vec::new()
                } else {
                    vec![RunningMoments::new(); horizon + 1]
                }
            })
            .collect();
        CellState { done: 0, per_stat }
    }

    fn merge(&mut self, other: &CellState) {
        for (mine, theirs) in self.per_stat.iter_mut().zip(&other.per_stat) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.merge(b);
            }
        }
    }
}

fn push_path(
    state: &mut CellState,
    stats: &[StatKind],
    replicate: u64,
    path: &MartingalePath,
) -> Result<()> {
    for (si, stat) in stats.iter().enumerate() {
        let accs = &mut state.per_stat[si];
        match *stat {
            StatKind::Mean => {
                for (n, acc) in accs.iter_mut().enumerate() {
                    acc.push(path.values[n]);
                }
            }
            StatKind::SecondMoment => {
                for (n, acc) in accs.iter_mut().enumerate() {
                    acc.push(path.values[n] * path.values[n]);
                }
            }
            StatKind::Moment { p } => {
                for (n, acc) in accs.iter_mut().enumerate() {
                    acc.push(powv(path.values[n], p, replicate)?);
                }
            }
            StatKind::SupTail { t } => {
                let first = path.values.iter().position(|&w| w > t);
                for (n, acc) in accs.iter_mut().enumerate() {
                    acc.push(if first.is_some_and(|f| f <= n) { 1.0 } else { 0.0 });
                }
            }
            StatKind::InfTail { t } => {
                let level = 1.0 / t;
                let first = path.values.iter().position(|&w| w <= level);
                for (n, acc) in accs.iter_mut().enumerate() {
                    acc.push(if first.is_some_and(|f| f <= n) { 1.0 } else { 0.0 });
                }
            }
            StatKind::SecondMomentExact => {}
        }
    }
    Ok(())
}

/// Accumulates replicates [start, end) in fixed-size blocks. Blocks
/// run on whatever workers are available; the merge order is fixed, so
/// the result is identical at any worker count.
fn accumulate_range(
    sampler: &dyn PathSampler,
    stats: &[StatKind],
    horizon: usize,
    start: u64,
    end: u64,
) -> Result<CellState> {
    let blocks: Vec<(u64, u64)> = (start..end)
        .step_by(SCAN_BLOCK as usize)
        .map(|lo| (lo, (lo + SCAN_BLOCK).min(end)))
        .collect();
    let partials: Vec<Result<CellState>> = blocks
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = CellState::new(stats, horizon);
            for r in lo..hi {
                let path = sampler.sample_path(r)?;
                push_path(&mut acc, stats, r, &path)?;
            }
            Ok(acc)
        })
        .collect();
    let mut merged = CellState::new(stats, horizon);
    for partial in partials {
        merged.merge(&partial?);
    }
    merged.done = end - start;
    Ok(merged)
}

/// On-disk scan state: partial (N, Σ, Σ²) merges per cell plus the
/// config they belong to. Resuming replays only the replicate ids not
/// yet merged, so an interrupted scan finishes with identical output.
#[derive(Serialize, Deserialize)]
struct ScanCheckpoint {
    config_text: String,
    cells: Vec<CellState>,
}

impl ScanCheckpoint {
    fn load_or_new(path: &std::path::Path, cfg: &ExperimentConfig) -> Result<ScanCheckpoint> {
        if path.exists() {
            let text = fs::read_to_string(path)?;
            let ckpt: ScanCheckpoint = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("unreadable checkpoint: {e}")))?;
            if ckpt.config_text != cfg.canonical_text() {
                return Err(Error::Config(format!(
                    "checkpoint at {} belongs to a different config; delete it or change out",
                    path.display()
                )));
            }
            return Ok(ckpt);
        }
        Ok(ScanCheckpoint { config_text: cfg.canonical_text(), cells: Vec::new() })
    }

    fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Internal(format!("checkpoint serialization failed: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Phase scan: one CSV row per (parameter, n) with the requested
/// statistics as columns.
pub fn run_scan(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    precheck_statistics(cfg)?;
    let mut report = RunReport::new("scan", cfg);

    let mut columns = vec!["param".to_string(), "n".to_string()];
    for stat in &cfg.statistics {
        columns.extend(stat.columns());
    }
    let mut table = CsvTable::new(columns);

    fs::create_dir_all(&cfg.out_dir)?;
    let ckpt_path = cfg.out_dir.join("checkpoint.json");
    let mut ckpt = ScanCheckpoint::load_or_new(&ckpt_path, cfg)?;

    let root = SeedStream::new(cfg.master_seed, 0);
    let params = cell_params(cfg);
    for (ci, &param) in params.iter().enumerate() {
        let sampler = cell_sampler(cfg, param, root.substream(ci as u64))?;
        while ckpt.cells.len() <= ci {
            let fresh = CellState::new(&cfg.statistics, cfg.horizon);
            ckpt.cells.push(fresh);
        }
        let interval =
            if cfg.checkpoint_interval == 0 { cfg.reps } else { cfg.checkpoint_interval };
        while ckpt.cells[ci].done < cfg.reps {
            let lo = ckpt.cells[ci].done;
            let hi = (lo + interval).min(cfg.reps);
            let partial = accumulate_range(sampler.as_ref(), &cfg.statistics, cfg.horizon, lo, hi)?;
            ckpt.cells[ci].merge(&partial);
            ckpt.cells[ci].done = hi;
            if cfg.checkpoint_interval > 0 && hi < cfg.reps {
                ckpt.save(&ckpt_path)?;
            }
        }

        let state = &ckpt.cells[ci];
        for n in 0..=cfg.horizon {
            let mut row = vec![fmt_f64(param), n.to_string()];
            for (si, stat) in cfg.statistics.iter().enumerate() {
                match *stat {
                    StatKind::Mean | StatKind::SecondMoment | StatKind::Moment { .. } => {
                        let acc = &state.per_stat[si][n];
                        row.push(fmt_f64(acc.mean()));
                        row.push(fmt_f64(acc.std_error()));
                    }
                    StatKind::SupTail { t } | StatKind::InfTail { t } => {
                        let acc = &state.per_stat[si][n];
                        let tail = TailEstimate::from_counts(t, n, acc.total() as u64, cfg.reps);
                        row.push(fmt_f64(tail.point()));
                        row.push(fmt_f64(tail.lower_conf));
                        row.push(fmt_f64(tail.upper_conf));
                    }
                    StatKind::SecondMomentExact => {
                        row.push(fmt_f64(exact_value(cfg, param, n)?));
                    }
                }
            }
            table.push_row(row)?;
        }

        // Per-cell invariant checks at the horizon.
        for (si, stat) in cfg.statistics.iter().enumerate() {
            match *stat {
                StatKind::Mean => {
                    let acc = &state.per_stat[si][cfg.horizon];
                    let (mean, se) = (acc.mean(), acc.std_error());
                    let dev = (mean - 1.0).abs();
                    report.check(
                        format!("martingale-mean(param={param})"),
                        dev <= 3.0 * se,
                        format!("mean {} vs 1 within 3 SE ({})", fmt_f64(mean), fmt_f64(se)),
                    );
                }
                StatKind::SecondMoment if cfg.statistics.contains(&StatKind::SecondMomentExact) => {
                    let acc = &state.per_stat[si][cfg.horizon];
                    let exact = exact_value(cfg, param, cfg.horizon)?;
                    let dev = (acc.mean() - exact).abs();
                    report.check(
                        format!("second-moment-vs-exact(param={param})"),
                        dev <= 3.0 * acc.std_error(),
                        format!(
                            "MC {} vs exact {} within 3 SE ({})",
                            fmt_f64(acc.mean()),
                            fmt_f64(exact),
                            fmt_f64(acc.std_error())
                        ),
                    );
                }
                _ => {}
            }
        }
    }

    let csv_path = cfg.out_dir.join("results.csv");
    table.write(&csv_path)?;
    if ckpt_path.exists() {
        fs::remove_file(&ckpt_path)?;
    }
    report.info(
        "scan-rows",
        format!("{} rows ({} cells x {} steps)", table.row_count(), params.len(), cfg.horizon + 1),
    );
    report.artifacts.push(csv_path);
    report.finish(cfg, started)
}

/// Oracle suite: every exact cross-check at desk scale.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    let mut report = RunReport::new("verify", cfg);
    let seed = cfg.master_seed;

    // Transfer-matrix DP against brute-force path enumeration.
    let mut worst: f64 = 0.0;
    for (dim, n, beta) in [(1usize, 8usize, 0.6f64), (2, 5, 0.4)] {
        let model = PolymerModel::new(cfg.dist.clone(), beta, dim, n)?;
        let base = SeedStream::new(seed, 0xb01);
        for r in 0..5 {
            let env = EnvField::new(cfg.dist.clone(), &base, r);
            let (_, slices) = model.slices(&env, n)?;
            let dp = slices.last().expect("n+1 slices").log_partition();
            let brute = brute_force_log_partition(&env, beta, n, dim)?;
            worst = worst.max((dp - brute).abs());
        }
    }
    report.check(
        "dp-vs-brute-force",
        worst <= DP_VS_BRUTE_TOL,
        format!("max |log Z gap| {} (tol {})", fmt_f64(worst), fmt_f64(DP_VS_BRUTE_TOL)),
    );

    // Collision-recursion second moment against Monte Carlo.
    {
        let beta = 0.5;
        let n = 4;
        let exact = second_moment_exact(&cfg.dist, beta, n, 1)?;
        let sampler =
            PolymerSampler::new(cfg.dist.clone(), beta, 1, n, SeedStream::new(seed, 0xb02))?;
        let est = estimate_moment(&sampler, 2.0, n, 20_000)?;
        let dev = (est.mean - exact).abs();
        report.check(
            "replica-vs-mc",
            dev <= 3.0 * est.std_error,
            format!(
                "MC {} vs exact {} within 3 SE ({})",
                fmt_f64(est.mean),
                fmt_f64(exact),
                fmt_f64(est.std_error)
            ),
        );
        let gamma2 = collision_exponent(&cfg.dist, beta)?;
        let closed = (1.0 + gamma2.exp()) / 2.0;
        let one_step = second_moment_exact(&cfg.dist, beta, 1, 1)?;
        report.check(
            "replica-one-step-closed-form",
            (one_step - closed).abs() <= CLOSED_FORM_TOL,
            format!("recursion {} vs (1+e^g)/2 {}", fmt_f64(one_step), fmt_f64(closed)),
        );
    }

    // Galton-Watson closed form against Monte Carlo, plus the limit.
    {
        let n = 10;
        let exact = gw_second_moment_exact(&cfg.offspring, n)?;
        let sampler = GwSampler::new(cfg.offspring.clone(), n, SeedStream::new(seed, 0xb03));
        let est = estimate_moment(&sampler, 2.0, n, 20_000)?;
        let dev = (est.mean - exact).abs();
        report.check(
            "gw-closed-form-vs-mc",
            dev <= 3.0 * est.std_error,
            format!(
                "MC {} vs exact {} within 3 SE ({})",
                fmt_f64(est.mean),
                fmt_f64(exact),
                fmt_f64(est.std_error)
            ),
        );
        let limit = gw_second_moment_limit(&cfg.offspring)?;
        let far = gw_second_moment_exact(&cfg.offspring, 2000)?;
        report.check(
            "gw-second-moment-limit",
            (far - limit).abs() <= 1e-9 && far <= limit + 1e-15,
            format!("n=2000 value {} vs limit {}", fmt_f64(far), fmt_f64(limit)),
        );
    }

    // Forward-times-restarted product identity across all splits.
    {
        let mut worst: f64 = 0.0;
        for dim in [1usize, 2] {
            let m = 12;
            let model = PolymerModel::new(cfg.dist.clone(), 0.8, dim, m)?;
            let base = SeedStream::new(seed, 0xb04 + dim as u64);
            for r in 0..3 {
                let env = EnvField::new(cfg.dist.clone(), &base, r);
                for res in model.product_split_residuals(&env, m)? {
                    worst = worst.max(res);
                }
            }
        }
        report.check(
            "product-identity",
            worst <= PRODUCT_IDENTITY_TOL,
            format!(
                "max relative residual {} (tol {})",
                fmt_f64(worst),
                fmt_f64(PRODUCT_IDENTITY_TOL)
            ),
        );
    }

    // BRW at theta = 0 must reproduce GW paths bit for bit.
    {
        let spec = BrwSpec::new(cfg.offspring.clone(), cfg.dist.clone(), 0.0)?;
        let mut all_equal = true;
        for r in 0..20 {
            let stream = SeedStream::new(seed, 0xb05).substream(r);
            let gw = gw_martingale_path(&cfg.offspring, 10, &stream)?;
            let brw = brw_martingale_path(&spec, 10, &stream)?;
            all_equal &= gw.values == brw.values;
        }
        report.check(
            "brw-theta-zero-equals-gw",
            all_equal,
            "20 seeds, horizon 10, bitwise path equality".to_string(),
        );
    }

    // The polymer martingale has mean one.
    {
        let sampler =
            PolymerSampler::new(cfg.dist.clone(), 0.7, 1, 10, SeedStream::new(seed, 0xb06))?;
        let est = estimate_moment(&sampler, 1.0, 10, 20_000)?;
        let dev = (est.mean - 1.0).abs();
        report.check(
            "polymer-mean-one",
            dev <= 3.0 * est.std_error,
            format!("mean {} within 3 SE ({})", fmt_f64(est.mean), fmt_f64(est.std_error)),
        );
    }

    report.finish(cfg, started)
}

/// Convex domination suite over the configured model.
pub fn run_domination(
    cfg: &ExperimentConfig,
    functions: &[TestFunction],
    k: usize,
    l: usize,
) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    if functions.is_empty() {
        return Err(Error::Config("domination needs at least one test function".into()));
    }
    let mut report = RunReport::new("domination", cfg);
    let root = SeedStream::new(cfg.master_seed, 0);
    let mut records = Vec::new();

    for (ci, &param) in cell_params(cfg).iter().enumerate() {
        let mut cell_cfg = cfg.clone();
        cell_cfg.horizon = k + l;
        let paired = cell_sampler(&cell_cfg, param, root.substream(2 * ci as u64))?;
        cell_cfg.horizon = l;
        let indep = cell_sampler(&cell_cfg, param, root.substream(2 * ci as u64 + 1))?;
        for &f in functions {
            let rec = domination_test(paired.as_ref(), indep.as_ref(), f, k, l, cfg.reps)?;
            let name = format!("domination({f}, param={param})");
            match rec.verdict {
                Verdict::Pass => report.check(
                    name,
                    true,
                    format!(
                        "lhs {} <= rhs {} (margin {})",
                        fmt_f64(rec.lhs.mean),
                        fmt_f64(rec.rhs.mean),
                        fmt_f64(rec.margin)
                    ),
                ),
                Verdict::Fail => report.check(
                    name,
                    false,
                    format!(
                        "lhs {} vs rhs {} (margin {})",
                        fmt_f64(rec.lhs.mean),
                        fmt_f64(rec.rhs.mean),
                        fmt_f64(rec.margin)
                    ),
                ),
                Verdict::Inconclusive => report.info(
                    name,
                    format!("only {} surviving replicates; verdict withheld", rec.survivors),
                ),
            }
            records.push(StatRecord {
                experiment: "domination".to_string(),
                sampler: paired.describe(),
                body: rec,
            });
        }
    }

    let path = cfg.out_dir.join("records.jsonl");
    write_jsonl(&path, &records)?;
    report.artifacts.push(path);
    report.finish(cfg, started)
}

/// Tail-witnessed moment certificates plus the strong-disorder floor
/// report for each grid parameter.
pub fn run_certify(cfg: &ExperimentConfig, t_max: f64) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    if !(t_max > 2.0) {
        return Err(Error::Config(format!("t-max must exceed 2, got {t_max}")));
    }
    let mut report = RunReport::new("certify", cfg);
    let root = SeedStream::new(cfg.master_seed, 0);
    let mut records: Vec<StatRecord<Certificate>> = Vec::new();

    for (ci, &param) in cell_params(cfg).iter().enumerate() {
        let k_const = match cfg.model {
            ModelKind::Polymer => cfg.dist.ratio_bounds(param)?.k_m(),
            ModelKind::Gw => cfg.offspring.ratio_bounds().k_m(),
            ModelKind::Brw => {
                return Err(Error::Unsupported(
                    "certificates need an almost-sure step ratio constant; \
                     use the polymer or gw model"
                        .into(),
                ));
            }
        };
        if !k_const.is_finite() {
            return Err(Error::Unsupported(format!(
                "step ratios are unbounded at param {param}; certificates need \
                 bounded disorder (or min offspring >= 1)"
            )));
        }
        let sampler = cell_sampler(cfg, param, root.substream(ci as u64))?;
        let n = cfg.horizon;

        // L^{1+eps}: walk t upward until the sup-tail witness certifies.
        let mut lp_found = None;
        let mut t = 2.0;
        while t <= t_max {
            let tail = estimate_sup_tail(sampler.as_ref(), t, n, cfg.reps)?;
            let cert = lp_certificate(&tail, k_const)?;
            let certified = cert.status == CertificateStatus::Certified;
            records.push(StatRecord {
                experiment: "certify".to_string(),
                sampler: sampler.describe(),
                body: cert.clone(),
            });
            if certified {
                lp_found = Some(cert);
                break;
            }
            t *= 2.0;
        }
        match &lp_found {
            Some(cert) => {
                let est = estimate_moment(sampler.as_ref(), cert.exponent, n, cfg.reps)?;
                report.check(
                    format!("lp-certificate(param={param})"),
                    est.mean <= cert.bound + 3.0 * est.std_error,
                    format!(
                        "certified at t={} with bound {}; MC E[M^{}] = {}",
                        fmt_f64(cert.threshold),
                        fmt_f64(cert.bound),
                        cert.exponent,
                        fmt_f64(est.mean)
                    ),
                );
            }
            None => report.info(
                format!("lp-certificate(param={param})"),
                format!("no threshold up to {t_max} certified; consistent with strong disorder"),
            ),
        }

        // Negative moment: the analogous walk on the inf-tail.
        let strictly_positive = match cfg.model {
            ModelKind::Polymer => {
                cfg.dist.atoms().is_none_or(|atoms| atoms.iter().all(|&(v, _)| v.is_finite()))
            }
            ModelKind::Gw => cfg.offspring.min_count() >= 1,
            ModelKind::Brw => unreachable!("rejected above"),
        };
        if strictly_positive {
            let mut neg_found = None;
            let mut t = 2.0;
            while t <= t_max {
                let tail = estimate_inf_tail(sampler.as_ref(), t, n, cfg.reps)?;
                let cert = neg_moment_certificate(&tail, k_const)?;
                let certified = cert.status == CertificateStatus::Certified;
                records.push(StatRecord {
                    experiment: "certify".to_string(),
                    sampler: sampler.describe(),
                    body: cert.clone(),
                });
                if certified {
                    neg_found = Some(cert);
                    break;
                }
                t *= 2.0;
            }
            match &neg_found {
                Some(cert) => {
                    let est = estimate_moment(sampler.as_ref(), cert.exponent, n, cfg.reps)?;
                    report.check(
                        format!("negative-moment-certificate(param={param})"),
                        est.mean <= cert.bound + 3.0 * est.std_error,
                        format!(
                            "certified at t={} with bound {}; MC E[M^{}] = {}",
                            fmt_f64(cert.threshold),
                            fmt_f64(cert.bound),
                            cert.exponent,
                            fmt_f64(est.mean)
                        ),
                    );
                }
                None => report.info(
                    format!("negative-moment-certificate(param={param})"),
                    format!("no threshold up to {t_max} certified"),
                ),
            }
        } else {
            report.info(
                format!("negative-moment-certificate(param={param})"),
                "skipped: martingale can hit zero, negative moments diverge".to_string(),
            );
        }

        // Strong-disorder floor, informational at finite horizon.
        let sd = strong_disorder_bound_check(sampler.as_ref(), 2.0, n, cfg.reps, k_const)?;
        report.check(
            format!("strong-disorder-trend(param={param})"),
            sd.trend_ok,
            format!(
                "hits at n/2: {}, at n: {} (nested events)",
                sd.half_tail.hit_count, sd.tail.hit_count
            ),
        );
        report.info(format!("strong-disorder-floor(param={param})"), sd.note.clone());
    }

    let path = cfg.out_dir.join("records.jsonl");
    write_jsonl(&path, &records)?;
    report.artifacts.push(path);
    report.finish(cfg, started)
}

/// Exact collision computations over the beta grid: gamma2, E[W_n²],
/// the finite-horizon return probability, and the L² threshold story.
pub fn run_replica(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    if cfg.model != ModelKind::Polymer {
        return Err(Error::Unsupported("replica computations are polymer-only".into()));
    }
    let mut report = RunReport::new("replica", cfg);

    let mut table = CsvTable::new(vec!["beta".into(), "gamma2".into(), "m2_exact".into()]);
    let mut all_sane = true;
    for &beta in &cfg.betas {
        let gamma2 = collision_exponent(&cfg.dist, beta)?;
        let m2 = second_moment_exact(&cfg.dist, beta, cfg.horizon, cfg.dim)?;
        all_sane &= m2 >= 1.0 - 1e-12 && gamma2 >= -1e-15;
        table.push_row(vec![fmt_f64(beta), fmt_f64(gamma2), fmt_f64(m2)])?;
    }
    report.check(
        "second-moments-at-least-one",
        all_sane,
        "gamma2 >= 0 and E[W_n^2] >= 1 across the grid".to_string(),
    );

    let pi_hat = collision_return_prob(cfg.dim, cfg.horizon)?;
    report.info(
        "collision-return-probability",
        format!(
            "pi_hat = {} at horizon {} (under-estimates the limit)",
            fmt_f64(pi_hat),
            cfg.horizon
        ),
    );
    let l2 = l2_critical_beta(&cfg.dist, cfg.dim, cfg.horizon)?;
    match l2.beta {
        Some(b) => report.info(
            "l2-critical-beta",
            format!("beta_hat = {} (threshold {}); {}", fmt_f64(b), fmt_f64(l2.threshold), l2.note),
        ),
        None => report.info("l2-critical-beta", l2.note.clone()),
    }

    let csv_path = cfg.out_dir.join("results.csv");
    table.write(&csv_path)?;
    report.artifacts.push(csv_path);
    report.finish(cfg, started)
}

/// Branching oracles end to end: GW closed forms, extinction via the
/// generating function, and the BRW reduction at theta = 0.
pub fn run_branching(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    let mut report = RunReport::new("branching", cfg);
    let seed = cfg.master_seed;
    let n = cfg.horizon;
    let reps = cfg.reps;

    let gw = GwSampler::new(cfg.offspring.clone(), n, SeedStream::new(seed, 0xc01));
    let mean_est = estimate_moment(&gw, 1.0, n, reps)?;
    report.check(
        "gw-mean-one",
        (mean_est.mean - 1.0).abs() <= 3.0 * mean_est.std_error,
        format!("mean {} within 3 SE ({})", fmt_f64(mean_est.mean), fmt_f64(mean_est.std_error)),
    );

    if cfg.offspring.mean > 1.0 {
        let exact = gw_second_moment_exact(&cfg.offspring, n)?;
        let m2 = estimate_moment(&gw, 2.0, n, reps)?;
        report.check(
            "gw-second-moment-vs-exact",
            (m2.mean - exact).abs() <= 3.0 * m2.std_error,
            format!(
                "MC {} vs exact {} within 3 SE ({})",
                fmt_f64(m2.mean),
                fmt_f64(exact),
                fmt_f64(m2.std_error)
            ),
        );
    } else {
        report.info("gw-second-moment-vs-exact", "skipped: needs mean offspring > 1".to_string());
    }

    // Extinction frequency against the iterated generating function.
    {
        let oracle = extinction_prob_by(&cfg.offspring, n);
        let mut extinct = 0u64;
        let sub = reps.min(5000);
        let base = SeedStream::new(seed, 0xc02);
        for r in 0..sub {
            if gw_martingale_path(&cfg.offspring, n, &base.substream(r))?.final_value() == 0.0 {
                extinct += 1;
            }
        }
        let frac = extinct as f64 / sub as f64;
        let se = (oracle * (1.0 - oracle) / sub as f64).sqrt().max(1e-3);
        report.check(
            "gw-extinction-vs-pgf",
            (frac - oracle).abs() <= 4.0 * se,
            format!(
                "frequency {} vs oracle {} ({} replicates)",
                fmt_f64(frac),
                fmt_f64(oracle),
                sub
            ),
        );
    }

    // BRW: mean one at the configured tilt, exact GW reduction at zero.
    {
        let spec = BrwSpec::new(cfg.offspring.clone(), cfg.dist.clone(), cfg.theta)?;
        let brw = BrwSampler::new(spec, n, SeedStream::new(seed, 0xc03));
        let est = estimate_moment(&brw, 1.0, n, reps.min(20_000))?;
        report.check(
            format!("brw-mean-one(theta={})", cfg.theta),
            (est.mean - 1.0).abs() <= 3.0 * est.std_error,
            format!("mean {} within 3 SE ({})", fmt_f64(est.mean), fmt_f64(est.std_error)),
        );

        let zero_spec = BrwSpec::new(cfg.offspring.clone(), cfg.dist.clone(), 0.0)?;
        let mut all_equal = true;
        for r in 0..20 {
            let stream = SeedStream::new(seed, 0xc04).substream(r);
            let g = gw_martingale_path(&cfg.offspring, n.min(20), &stream)?;
            let b = brw_martingale_path(&zero_spec, n.min(20), &stream)?;
            all_equal &= g.values == b.values;
        }
        report.check(
            "brw-theta-zero-equals-gw",
            all_equal,
            "20 seeds, bitwise path equality".to_string(),
        );
    }

    report.finish(cfg, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quick_cfg(out: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig {
            reps: 400,
            horizon: 6,
            betas: vec![0.0, 0.6],
            statistics: vec![
                StatKind::Mean,
                StatKind::SecondMoment,
                StatKind::SecondMomentExact,
                StatKind::SupTail { t: 2.0 },
            ],
            out_dir: out.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn scan_writes_one_row_per_param_and_step() {
        let dir = tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        let report = run_scan(&cfg).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let lines: Vec<&str> = text.trim_end().split('\n').collect();
        assert_eq!(lines.len(), 1 + 2 * 7);
        assert!(lines[0].starts_with("param,n,mean,mean_se,m2,m2_se,m2_exact,sup_tail_t2"));
        assert!(dir.path().join("report.txt").exists());
        assert!(!dir.path().join("checkpoint.json").exists());
    }

    #[test]
    fn scan_is_deterministic_and_checkpoint_equivalent() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let mut cfg_a = quick_cfg(dir_a.path());
        let mut cfg_b = quick_cfg(dir_b.path());
        // Different checkpoint cadence, same seed: identical CSV bytes.
        cfg_a.checkpoint_interval = 0;
        cfg_b.checkpoint_interval = 150;
        // Output paths differ, so compare bodies produced from configs
        // that agree in everything the accumulation depends on.
        run_scan(&cfg_a).unwrap();
        run_scan(&cfg_b).unwrap();
        let a = fs::read_to_string(dir_a.path().join("results.csv")).unwrap();
        let b = fs::read_to_string(dir_b.path().join("results.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stale_checkpoint_from_other_config_is_rejected() {
        let dir = tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        fs::create_dir_all(dir.path()).unwrap();
        fs::write(
            dir.path().join("checkpoint.json"),
            serde_json::to_string(&ScanCheckpoint {
                config_text: "model = gw\n".to_string(),
                cells: vec![],
            })
            .unwrap(),
        )
        .unwrap();
        let err = run_scan(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }

    #[test]
    fn verify_suite_passes() {
        let dir = tempdir().unwrap();
        let cfg =
            ExperimentConfig { out_dir: dir.path().to_path_buf(), ..ExperimentConfig::default() };
        let report = run_verify(&cfg).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
        assert!(report.checks.iter().any(|c| c.name == "dp-vs-brute-force"));
        let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(text.contains("status: PASS"));
    }

    #[test]
    fn domination_run_emits_records() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            reps: 2000,
            horizon: 10,
            betas: vec![0.6],
            ..ExperimentConfig::default()
        };
        let report =
            run_domination(&cfg, &[TestFunction::Square, TestFunction::Identity], 5, 5).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
        let text = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        assert_eq!(text.trim_end().split('\n').count(), 2);
        assert!(text.contains("\"verdict\""));
    }

    #[test]
    fn certify_weak_disorder_certifies() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            reps: 2000,
            horizon: 12,
            dim: 3,
            betas: vec![0.3],
            ..ExperimentConfig::default()
        };
        let report = run_certify(&cfg, 64.0).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
        let text = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        assert!(text.contains("\"status\":\"Certified\""), "{text}");
        // Certificates found: the lp check is a hard pass, not info.
        assert!(report
            .checks
            .iter()
            .any(|c| c.name.starts_with("lp-certificate") && !c.informational && c.passed));
    }

    #[test]
    fn certify_refuses_unbounded_disorder() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            dist: crate::disorder::DisorderDist::gaussian(0.0, 1.0).unwrap(),
            ..ExperimentConfig::default()
        };
        let err = run_certify(&cfg, 64.0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err:?}");
    }

    #[test]
    fn replica_run_reports_thresholds() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            dim: 3,
            horizon: 12,
            betas: vec![0.2, 0.4],
            ..ExperimentConfig::default()
        };
        let report = run_replica(&cfg).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(text.starts_with("beta,gamma2,m2_exact\n"));
        assert_eq!(text.trim_end().split('\n').count(), 3);
    }

    #[test]
    fn branching_run_passes() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            reps: 3000,
            horizon: 10,
            ..ExperimentConfig::default()
        };
        let report = run_branching(&cfg).unwrap();
        assert!(report.all_passed(), "{}", report.render_text());
    }

    #[test]
    fn negative_moment_scan_precheck_rejects_extinction() {
        let dir = tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            model: ModelKind::Gw,
            offspring: crate::branching::OffspringDist::new(vec![(0, 0.5), (2, 0.5)]).unwrap(),
            statistics: vec![StatKind::Moment { p: -0.5 }],
            ..ExperimentConfig::default()
        };
        let err = run_scan(&cfg).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err:?}");
    }
}
