//! Experiment configuration: a plain key=value file, flag overrides on
//! top, and full validation before any compute starts.

use crate::branching::OffspringDist;
use crate::disorder::DisorderDist;
use crate::stats::MIN_REPS;
use crate::{Error, Result};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which martingale family an experiment runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Polymer,
    Gw,
    Brw,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Polymer => write!(f, "polymer"),
            ModelKind::Gw => write!(f, "gw"),
            ModelKind::Brw => write!(f, "brw"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        match s.trim() {
            "polymer" => Ok(ModelKind::Polymer),
            "gw" => Ok(ModelKind::Gw),
            "brw" => Ok(ModelKind::Brw),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected polymer, gw, or brw)"
            ))),
        }
    }
}

/// One requested per-step statistic. The CSV column set is derived
/// from the statistic list and nothing else.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StatKind {
    /// MC mean of M_n (should sit at 1).
    Mean,
    /// MC mean of M_n².
    SecondMoment,
    /// Exact E[M_n²] from the collision recursion (polymer only).
    SecondMomentExact,
    /// MC mean of M_n^p.
    Moment { p: f64 },
    /// P(max_{k<=n} M_k > t) with binomial bounds.
    SupTail { t: f64 },
    /// P(min_{k<=n} M_k <= 1/t) with binomial bounds.
    InfTail { t: f64 },
}

impl StatKind {
    /// Column names this statistic contributes to the CSV schema.
    pub fn columns(&self) -> Vec<String> {
        match self {
            StatKind::Mean => vec!["mean".into(), "mean_se".into()],
            StatKind::SecondMoment => vec!["m2".into(), "m2_se".into()],
            StatKind::SecondMomentExact => vec!["m2_exact".into()],
            StatKind::Moment { p } => {
                vec![format!("moment_p{p}"), format!("moment_p{p}_se")]
            }
            StatKind::SupTail { t } => vec![
                format!("sup_tail_t{t}"),
                format!("sup_tail_t{t}_lo"),
                format!("sup_tail_t{t}_hi"),
            ],
            StatKind::InfTail { t } => vec![
                format!("inf_tail_t{t}"),
                format!("inf_tail_t{t}_lo"),
                format!("inf_tail_t{t}_hi"),
            ],
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatKind::Mean => write!(f, "mean"),
            StatKind::SecondMoment => write!(f, "second-moment"),
            StatKind::SecondMomentExact => write!(f, "second-moment-exact"),
            StatKind::Moment { p } => write!(f, "moment:{p}"),
            StatKind::SupTail { t } => write!(f, "sup-tail:{t}"),
            StatKind::InfTail { t } => write!(f, "inf-tail:{t}"),
        }
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<StatKind> {
        let s = s.trim();
        match s {
            "mean" => return Ok(StatKind::Mean),
            "second-moment" => return Ok(StatKind::SecondMoment),
            "second-moment-exact" => return Ok(StatKind::SecondMomentExact),
            _ => {}
        }
        for (prefix, needs_gt_one) in [("moment:", false), ("sup-tail:", true), ("inf-tail:", true)]
        {
            if let Some(arg) = s.strip_prefix(prefix) {
                let x: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad numeric argument '{arg}' in '{s}'")))?;
                if needs_gt_one && !(x > 1.0) {
                    return Err(Error::Config(format!(
                        "tail threshold must exceed 1, got {x} in '{s}'"
                    )));
                }
                return Ok(match prefix {
                    "moment:" => StatKind::Moment { p: x },
                    "sup-tail:" => StatKind::SupTail { t: x },
                    _ => StatKind::InfTail { t: x },
                });
            }
        }
        Err(Error::Config(format!(
            "unknown statistic '{s}' (known: mean, second-moment, second-moment-exact, \
             moment:P, sup-tail:T, inf-tail:T)"
        )))
    }
}

/// Everything a run needs, with defaults suitable for quick scans.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Polymer site disorder, or BRW displacement law.
    pub dist: DisorderDist,
    /// GW and BRW offspring law.
    pub offspring: OffspringDist,
    /// Polymer coupling grid; ignored by gw and brw.
    pub betas: Vec<f64>,
    /// BRW tilt parameter.
    pub theta: f64,
    pub dim: usize,
    pub horizon: usize,
    pub reps: u64,
    pub master_seed: u64,
    pub statistics: Vec<StatKind>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Replicates between checkpoint writes during scans; 0 disables.
    pub checkpoint_interval: u64,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelKind::Polymer,
            dist: DisorderDist::rademacher(),
            offspring: OffspringDist::one_or_two(),
            betas: vec![0.5],
            theta: 0.3,
            dim: 1,
            horizon: 15,
            reps: 10_000,
            master_seed: 0,
            statistics: vec![StatKind::Mean, StatKind::SecondMoment],
            out_dir: PathBuf::from("runs/out"),
            workers: None,
            checkpoint_interval: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses the key=value format. Lines starting with `#` and blank
    /// lines are skipped; unknown keys are errors so typos surface
    /// before compute.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got '{line}'", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad_num =
                |what: &str| Error::Config(format!("line {}: bad {what} '{value}'", idx + 1));
            match key {
                "model" => cfg.model = value.parse()?,
                "dist" => cfg.dist = DisorderDist::parse(value)?,
                "offspring" => cfg.offspring = parse_offspring(value)?,
                "beta" => {
                    cfg.betas = value
                        .split(',')
                        .map(|b| b.trim().parse::<f64>().map_err(|_| bad_num("beta")))
                        .collect::<Result<Vec<f64>>>()?;
                }
                "theta" => cfg.theta = value.parse().map_err(|_| bad_num("theta"))?,
                "dim" => cfg.dim = value.parse().map_err(|_| bad_num("dim"))?,
                "horizon" => cfg.horizon = value.parse().map_err(|_| bad_num("horizon"))?,
                "reps" => cfg.reps = value.parse().map_err(|_| bad_num("reps"))?,
                "seed" => cfg.master_seed = value.parse().map_err(|_| bad_num("seed"))?,
                "stats" => {
                    cfg.statistics = value
                        .split(',')
                        .map(|s| s.parse::<StatKind>())
                        .collect::<Result<Vec<StatKind>>>()?;
                }
                "out" => cfg.out_dir = PathBuf::from(value),
                "workers" => cfg.workers = Some(value.parse().map_err(|_| bad_num("workers"))?),
                "checkpoint" => {
                    cfg.checkpoint_interval =
                        value.parse().map_err(|_| bad_num("checkpoint interval"))?
                }
                other => {
                    return Err(Error::Config(format!("line {}: unknown key '{other}'", idx + 1)));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Config("beta grid must be non-empty".into()));
        }
        if self.betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config(format!(
                "beta grid must be finite and non-negative, got {:?}",
                self.betas
            )));
        }
        if self.statistics.is_empty() {
            return Err(Error::Config("statistic list must be non-empty".into()));
        }
        if self.reps < MIN_REPS {
            return Err(Error::Config(format!(
                "reps must be at least {MIN_REPS}, got {}",
                self.reps
            )));
        }
        if !(1..=4).contains(&self.dim) {
            return Err(Error::Config(format!("dim must be in 1..=4, got {}", self.dim)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config(format!("theta must be finite, got {}", self.theta)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The canonical text form: parsing it reproduces this config.
    /// Reports echo this, and checkpoints compare it to detect a
    /// config switch under a stale checkpoint.
    pub fn canonical_text(&self) -> String {
        let betas: Vec<String> = self.betas.iter().map(|b| b.to_string()).collect();
        let offspring: Vec<String> =
            self.offspring.atoms().iter().map(|&(k, p)| format!("({k},{p})")).collect();
        let stats: Vec<String> = self.statistics.iter().map(|s| s.to_string()).collect();
        let mut text = format!(
            "model = {}\ndist = {}\noffspring = [{}]\nbeta = {}\ntheta = {}\ndim = {}\n\
             horizon = {}\nreps = {}\nseed = {}\nstats = {}\nout = {}\ncheckpoint = {}\n",
            self.model,
            self.dist,
            offspring.join(","),
            betas.join(","),
            self.theta,
            self.dim,
            self.horizon,
            self.reps,
            self.master_seed,
            stats.join(","),
            self.out_dir.display(),
            self.checkpoint_interval,
        );
        if let Some(w) = self.workers {
            text.push_str(&format!("workers = {w}\n"));
        }
        text
    }
}

/// Offspring spec syntax: `[(count,prob),...]`.
pub fn parse_offspring(text: &str) -> Result<OffspringDist> {
    let inner =
        text.trim().strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or_else(|| {
            Error::Config(format!("offspring spec needs `[(count,prob),...]`, got `{text}`"))
        })?;
    let mut atoms = Vec::new();
    for part in inner.split("),(") {
        let part = part.trim_start_matches('(').trim_end_matches(')');
        let pieces: Vec<&str> = part.split(',').collect();
        if pieces.len() != 2 {
            return Err(Error::Config(format!("expected `(count,prob)`, got `({part})`")));
        }
        let count: u64 = pieces[0]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad offspring count '{}'", pieces[0])))?;
        let prob: f64 = pieces[1]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad offspring probability '{}'", pieces[1])))?;
        atoms.push((count, prob));
    }
    OffspringDist::new(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_full_config() {
        let text = "\
# phase scan
model = polymer
dist = rademacher
beta = 0.1, 0.5, 1.0
dim = 3
horizon = 15
reps = 100000
seed = 42
stats = mean, second-moment, sup-tail:2
out = runs/scan1
checkpoint = 20000
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.model, ModelKind::Polymer);
        assert_eq!(cfg.betas, vec![0.1, 0.5, 1.0]);
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.reps, 100_000);
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.statistics.len(), 3);
        assert_eq!(cfg.statistics[2], StatKind::SupTail { t: 2.0 });
        assert_eq!(cfg.out_dir, PathBuf::from("runs/scan1"));
        assert_eq!(cfg.checkpoint_interval, 20_000);
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig {
            model: ModelKind::Brw,
            theta: 0.25,
            betas: vec![0.3, 0.9],
            statistics: vec![
                StatKind::Mean,
                StatKind::Moment { p: 1.5 },
                StatKind::InfTail { t: 4.0 },
                StatKind::SecondMomentExact,
            ],
            offspring: OffspringDist::new(vec![(0, 0.25), (3, 0.75)]).unwrap(),
            dist: DisorderDist::gaussian(0.1, 2.0).unwrap(),
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::parse(&cfg.canonical_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(ExperimentConfig::parse("beta =").is_err());
        assert!(ExperimentConfig::parse("dim = 5").is_err());
        assert!(ExperimentConfig::parse("reps = 50").is_err());
        assert!(ExperimentConfig::parse("stats = mean, sup-tail:0.5").is_err());
        assert!(ExperimentConfig::parse("horizon = 0").is_err());
        assert!(ExperimentConfig::parse("frobnicate = 1").is_err());
        assert!(ExperimentConfig::parse("model : polymer").is_err());
        assert!(ExperimentConfig::parse("workers = 0").is_err());
        assert!(ExperimentConfig::parse("beta = -0.5").is_err());
    }

    #[test]
    fn offspring_specs() {
        let off = parse_offspring("[(1,0.5),(2,0.5)]").unwrap();
        assert_eq!(off, OffspringDist::one_or_two());
        assert!(parse_offspring("[(1,0.5),(2,0.6)]").is_err());
        assert!(parse_offspring("(1,1.0)").is_err());
        assert!(parse_offspring("[(x,1.0)]").is_err());
    }

    #[test]
    fn stat_kind_strings_round_trip() {
        let stats = [
            StatKind::Mean,
            StatKind::SecondMoment,
            StatKind::SecondMomentExact,
            StatKind::Moment { p: -0.5 },
            StatKind::SupTail { t: 2.0 },
            StatKind::InfTail { t: 64.0 },
        ];
        for s in stats {
            assert_eq!(s.to_string().parse::<StatKind>().unwrap(), s);
        }
        assert!("moment".parse::<StatKind>().is_err());
        // The schema is a pure function of the statistic list.
        assert_eq!(StatKind::SupTail { t: 2.0 }.columns().len(), 3);
        assert_eq!(StatKind::Mean.columns(), vec!["mean", "mean_se"]);
    }
}
