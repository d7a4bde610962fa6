//! Monte Carlo estimation over any martingale sampler, plus the
//! moment-certificate machinery built from first-passage tail bounds.
//!
//! The estimators all reduce to one primitive: map each replicate's
//! path to a value and fold the values into exact (N, Σ, Σ²) state.
//! Exactness of the fold makes every estimate independent of worker
//! count and lets checkpoints merge partial states bit for bit.
//!
//! Certificates follow the stopping-time argument: if the measured
//! tail of the running extremum is small against 1/(4K²t) (or
//! 1/(4K²)), an explicit L^{1+ε} (or negative-moment) bound follows
//! with pinned constants ε = min(1, ln 2 / ln t) and bound 2·t^{1+ε}
//! (resp. 2·t^ε). Tails are measured at finite horizon, so every
//! certificate is labeled empirical and records that horizon.

use crate::accum::RunningMoments;
use crate::branching::{brw_martingale_path, gw_martingale_path, BrwSpec, OffspringDist};
use crate::disorder::DisorderDist;
use crate::polymer::{EnvField, MartingalePath, PolymerModel};
use crate::rng::SeedStream;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use std::fmt;
use std::str::FromStr;

/// Two-sided coverage of a 3-sigma normal interval: erf(3/sqrt 2).
pub const CI_LEVEL_3SIGMA: f64 = 0.997_300_203_936_739_8;

/// Estimators refuse fewer replicates than this.
pub const MIN_REPS: u64 = 100;

/// Domination verdicts with fewer surviving replicates are inconclusive.
pub const MIN_SURVIVORS: u64 = 100;

/// Replicates per parallel work unit. Fixed so the block decomposition,
/// and with it every estimate, is a pure function of the replicate ids.
const PAR_BLOCK: u64 = 1024;

/// Anything that turns a replicate id into a martingale path.
///
/// Implementations must be pure in the replicate id: the same id yields
/// the same path no matter which worker asks, which is what the
/// determinism guarantees rest on.
pub trait PathSampler: Sync {
    fn sample_path(&self, replicate: u64) -> Result<MartingalePath>;
    /// Largest step index present in sampled paths.
    fn horizon(&self) -> usize;
    /// Human-readable sampler spec for records.
    fn describe(&self) -> String;
}

/// Directed polymer paths W_0..W_n in a fresh environment per replicate.
pub struct PolymerSampler {
    model: PolymerModel,
    base: SeedStream,
}

impl PolymerSampler {
    pub fn new(
        dist: DisorderDist,
        beta: f64,
        dim: usize,
        horizon: usize,
        base: SeedStream,
    ) -> Result<PolymerSampler> {
        Ok(PolymerSampler { model: PolymerModel::new(dist, beta, dim, horizon)?, base })
    }

    pub fn model(&self) -> &PolymerModel {
        &self.model
    }
}

impl PathSampler for PolymerSampler {
    fn sample_path(&self, replicate: u64) -> Result<MartingalePath> {
        let env = EnvField::new(self.model.dist.clone(), &self.base, replicate);
        self.model.run(&env, self.model.horizon())
    }

    fn horizon(&self) -> usize {
        self.model.horizon()
    }

    fn describe(&self) -> String {
        format!(
            "polymer(dim={}, beta={}, dist={}, horizon={})",
            self.model.dim,
            self.model.beta,
            self.model.dist,
            self.model.horizon()
        )
    }
}

/// Galton-Watson normalized population M_0..M_n.
pub struct GwSampler {
    offspring: OffspringDist,
    horizon: usize,
    base: SeedStream,
}

impl GwSampler {
    pub fn new(offspring: OffspringDist, horizon: usize, base: SeedStream) -> GwSampler {
        GwSampler { offspring, horizon, base }
    }
}

impl PathSampler for GwSampler {
    fn sample_path(&self, replicate: u64) -> Result<MartingalePath> {
        gw_martingale_path(&self.offspring, self.horizon, &self.base.substream(replicate))
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn describe(&self) -> String {
        format!("gw(offspring={:?}, horizon={})", self.offspring.atoms(), self.horizon)
    }
}

/// Branching random walk additive martingale W^{(0)}..W^{(n)}.
pub struct BrwSampler {
    spec: BrwSpec,
    horizon: usize,
    base: SeedStream,
}

impl BrwSampler {
    pub fn new(spec: BrwSpec, horizon: usize, base: SeedStream) -> BrwSampler {
        BrwSampler { spec, horizon, base }
    }
}

impl PathSampler for BrwSampler {
    fn sample_path(&self, replicate: u64) -> Result<MartingalePath> {
        brw_martingale_path(&self.spec, self.horizon, &self.base.substream(replicate))
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn describe(&self) -> String {
        format!(
            "brw(offspring={:?}, displacement={}, theta={}, horizon={})",
            self.spec.offspring.atoms(),
            self.spec.displacement,
            self.spec.theta,
            self.horizon
        )
    }
}

/// A finished Monte Carlo mean with its exact mergeable state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub statistic: String,
    pub sample_count: u64,
    pub mean: f64,
    pub std_error: f64,
    pub ci_level: f64,
    moments: RunningMoments,
}

impl MomentEstimate {
    pub fn from_moments(statistic: impl Into<String>, moments: RunningMoments) -> MomentEstimate {
        MomentEstimate {
            statistic: statistic.into(),
            sample_count: moments.n,
            mean: moments.mean(),
            std_error: moments.std_error(),
            ci_level: CI_LEVEL_3SIGMA,
            moments,
        }
    }

    pub fn moments(&self) -> &RunningMoments {
        &self.moments
    }

    /// Combines two partial estimates of the same statistic. Exact on
    /// (N, Σ, Σ²), hence associative and commutative bit for bit.
    pub fn merge(&self, other: &MomentEstimate) -> Result<MomentEstimate> {
        if self.statistic != other.statistic {
            return Err(Error::InvalidArgument(format!(
                "cannot merge estimates of '{}' and '{}'",
                self.statistic, other.statistic
            )));
        }
        let mut moments = self.moments.clone();
        moments.merge(&other.moments);
        Ok(MomentEstimate::from_moments(self.statistic.clone(), moments))
    }

    /// Half-width of the normal confidence interval at ci_level.
    pub fn ci_halfwidth(&self) -> f64 {
        3.0 * self.std_error
    }
}

/// Empirical tail frequency with exact binomial confidence bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub threshold: f64,
    pub horizon: usize,
    pub hit_count: u64,
    pub sample_count: u64,
    pub lower_conf: f64,
    pub upper_conf: f64,
}

impl TailEstimate {
    /// Builds the estimate with a conservative (exact binomial)
    /// interval at the 3-sigma level.
    pub fn from_counts(
        threshold: f64,
        horizon: usize,
        hit_count: u64,
        sample_count: u64,
    ) -> TailEstimate {
        let (lower_conf, upper_conf) = clopper_pearson(hit_count, sample_count, CI_LEVEL_3SIGMA);
        TailEstimate { threshold, horizon, hit_count, sample_count, lower_conf, upper_conf }
    }

    pub fn point(&self) -> f64 {
        if self.sample_count == 0 {
            return f64::NAN;
        }
        self.hit_count as f64 / self.sample_count as f64
    }
}

/// Exact binomial interval: the frequentist bounds whose tail
/// probabilities match alpha/2 on each side. Conservative by design,
/// which is the right bias for certificate hypotheses.
fn clopper_pearson(hits: u64, n: u64, ci_level: f64) -> (f64, f64) {
    assert!(hits <= n && n > 0, "need 0 <= hits <= n, n > 0");
    let alpha = 1.0 - ci_level;
    let lower = if hits == 0 {
        0.0
    } else {
        Beta::new(hits as f64, (n - hits + 1) as f64)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if hits == n {
        1.0
    } else {
        Beta::new((hits + 1) as f64, (n - hits) as f64)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// x^p with the conventions the estimators need: exact passthrough at
/// p = 1, products for small integer p, and a hard error instead of
/// infinity when a zero value meets a negative exponent.
pub(crate) fn powv(x: f64, p: f64, replicate: u64) -> Result<f64> {
    if p < 0.0 && x == 0.0 {
        return Err(Error::Domain(format!(
            "replicate {replicate} produced value 0, which has no moment of order {p}"
        )));
    }
    Ok(if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    })
}

/// Folds `map(replicate, path)` over a replicate range into exact
/// moment state. `None` values are skipped (conditioning). The block
/// decomposition is fixed, so the result does not depend on how many
/// workers ran the blocks.
fn map_moments_range(
    sampler: &dyn PathSampler,
    start: u64,
    end: u64,
    map: &(dyn Fn(u64, &MartingalePath) -> Result<Option<f64>> + Sync),
) -> Result<RunningMoments> {
    assert!(start <= end);
    let blocks: Vec<(u64, u64)> = (start..end)
        .step_by(PAR_BLOCK as usize)
        .map(|lo| (lo, (lo + PAR_BLOCK).min(end)))
        .collect();
    let partials: Vec<Result<RunningMoments>> = blocks
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = RunningMoments::new();
            for r in lo..hi {
                let path = sampler.sample_path(r)?;
                if let Some(v) = map(r, &path)? {
                    acc.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut merged = RunningMoments::new();
    for partial in partials {
        merged.merge(&partial?);
    }
    Ok(merged)
}

fn check_horizon(sampler: &dyn PathSampler, n: usize) -> Result<()> {
    if n > sampler.horizon() {
        return Err(Error::InvalidArgument(format!(
            "step {n} exceeds the sampler horizon {}",
            sampler.horizon()
        )));
    }
    Ok(())
}

fn check_reps(reps: u64) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPS} replicates, got {reps}"
        )));
    }
    Ok(())
}

/// Mergeable partial state of E[M_n^p] over a replicate id range.
/// The checkpointing runner accumulates these and merges them; the
/// one-shot estimator below is the [0, reps) special case.
pub fn moment_state(
    sampler: &dyn PathSampler,
    p: f64,
    n: usize,
    start: u64,
    end: u64,
) -> Result<RunningMoments> {
    check_horizon(sampler, n)?;
    map_moments_range(sampler, start, end, &|r, path| powv(path.values[n], p, r).map(Some))
}

/// MC estimate of E[M_n^p]. For p < 0 every replicate must be strictly
/// positive; a zero aborts with the offending replicate named.
pub fn estimate_moment(
    sampler: &dyn PathSampler,
    p: f64,
    n: usize,
    reps: u64,
) -> Result<MomentEstimate> {
    check_reps(reps)?;
    let state = moment_state(sampler, p, n, 0, reps)?;
    Ok(MomentEstimate::from_moments(format!("moment(p={p}, n={n})"), state))
}

/// MC estimate of E[(max_{k<=n} M_k)^p], the running-maximum moment.
pub fn estimate_sup_moment(
    sampler: &dyn PathSampler,
    p: f64,
    n: usize,
    reps: u64,
) -> Result<MomentEstimate> {
    check_reps(reps)?;
    check_horizon(sampler, n)?;
    let state = map_moments_range(sampler, 0, reps, &|r, path| {
        let sup = path.values[..=n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        powv(sup, p, r).map(Some)
    })?;
    Ok(MomentEstimate::from_moments(format!("sup_moment(p={p}, n={n})"), state))
}

/// Mergeable partial hit state for a path predicate: indicator pushes,
/// so `total()` recovers the integer hit count exactly.
fn tail_state(
    sampler: &dyn PathSampler,
    start: u64,
    end: u64,
    hit: &(dyn Fn(&MartingalePath) -> bool + Sync),
) -> Result<RunningMoments> {
    map_moments_range(sampler, start, end, &|_, path| Ok(Some(if hit(path) { 1.0 } else { 0.0 })))
}

/// Fraction of replicates whose running maximum over steps 0..=n
/// exceeds t, with exact binomial confidence bounds. Nested in both t
/// and n on shared seeds: hits can only grow as t shrinks or n grows.
pub fn estimate_sup_tail(
    sampler: &dyn PathSampler,
    t: f64,
    n: usize,
    reps: u64,
) -> Result<TailEstimate> {
    if !(t > 1.0) {
        return Err(Error::InvalidArgument(format!("tail threshold must exceed 1, got {t}")));
    }
    check_horizon(sampler, n)?;
    let state = tail_state(sampler, 0, reps, &|path| path.values[..=n].iter().any(|&w| w > t))?;
    Ok(TailEstimate::from_counts(t, n, state.total() as u64, reps))
}

/// Fraction of replicates whose running minimum over steps 0..=n drops
/// to 1/t or below. Same nesting: hits grow with n, shrink as t grows.
pub fn estimate_inf_tail(
    sampler: &dyn PathSampler,
    t: f64,
    n: usize,
    reps: u64,
) -> Result<TailEstimate> {
    if !(t > 1.0) {
        return Err(Error::InvalidArgument(format!("tail threshold must exceed 1, got {t}")));
    }
    check_horizon(sampler, n)?;
    let level = 1.0 / t;
    let state =
        tail_state(sampler, 0, reps, &|path| path.values[..=n].iter().any(|&w| w <= level))?;
    Ok(TailEstimate::from_counts(t, n, state.total() as u64, reps))
}

/// The capped ramp min(delta*(x/eps - 1), 1): zero at x = eps, capped
/// at 1 from x = eps*(1/delta + 1), and negative (floor -delta) below
/// eps. Not clamped at zero; the left tail is part of the sandwich.
pub fn f_delta_eps(delta: f64, eps: f64, x: f64) -> f64 {
    assert!(delta > 0.0 && eps > 0.0, "ramp parameters must be positive");
    (delta * (x / eps - 1.0)).min(1.0)
}

/// Smallest k with values[k] > t, if the path ever exceeds t.
pub fn first_passage(path: &MartingalePath, t: f64) -> Option<usize> {
    assert!(t > 0.0, "passage level must be positive");
    path.first_passage_above(t)
}

/// Convex test functions admitted by the domination test. The ramp
/// enters negated because f_{delta,eps} itself is concave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// Linear: the equality case, checked two-sided.
    Identity,
    Square,
    Fourth,
    /// exp(x/c).
    ExpScaled {
        c: f64,
    },
    /// -f_{delta,eps}(x).
    NegRamp {
        delta: f64,
        eps: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
            TestFunction::Fourth => (x * x) * (x * x),
            TestFunction::ExpScaled { c } => (x / c).exp(),
            TestFunction::NegRamp { delta, eps } => -f_delta_eps(delta, eps, x),
        }
    }

    /// Linear functions get an equality (two-sided) verdict.
    pub fn two_sided(&self) -> bool {
        matches!(self, TestFunction::Identity)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestFunction::Identity => write!(f, "x"),
            TestFunction::Square => write!(f, "x^2"),
            TestFunction::Fourth => write!(f, "x^4"),
            TestFunction::ExpScaled { c } => write!(f, "exp(x/{c})"),
            TestFunction::NegRamp { delta, eps } => write!(f, "-ramp({delta},{eps})"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<TestFunction> {
        let s = s.trim();
        match s {
            "x" | "identity" => return Ok(TestFunction::Identity),
            "x^2" | "x2" | "square" => return Ok(TestFunction::Square),
            "x^4" | "x4" | "fourth" => return Ok(TestFunction::Fourth),
            _ => {}
        }
        if let Some(arg) = s.strip_prefix("exp:") {
            let c: f64 =
                arg.parse().map_err(|_| Error::Config(format!("bad exp scale '{arg}'")))?;
            if !(c > 0.0) {
                return Err(Error::Config(format!("exp scale must be positive, got {c}")));
            }
            return Ok(TestFunction::ExpScaled { c });
        }
        if let Some(args) = s.strip_prefix("negramp:") {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() == 2 {
                let delta: f64 = parts[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad ramp delta '{}'", parts[0])))?;
                let eps: f64 = parts[1]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad ramp eps '{}'", parts[1])))?;
                if delta > 0.0 && eps > 0.0 {
                    return Ok(TestFunction::NegRamp { delta, eps });
                }
            }
            return Err(Error::Config(format!("bad ramp spec '{args}', want delta,eps > 0")));
        }
        Err(Error::Config(format!(
            "unknown test function '{s}' (known: x, x^2, x^4, exp:C, negramp:D,E)"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Outcome of one convex-domination comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationRecord {
    pub function: String,
    pub k: usize,
    pub l: usize,
    /// Replicates with M_k > 0; the left side conditions on these.
    pub survivors: u64,
    /// E[f(M_{k+l}/M_k)] over survivors.
    pub lhs: MomentEstimate,
    /// E[f(M_l)] from the independent sampler.
    pub rhs: MomentEstimate,
    /// Slack left in the passing direction (negative means failed).
    pub margin: f64,
    pub verdict: Verdict,
}

/// Compares the restarted-ratio mean E[f(M_{k+l}/M_k)] against the
/// fresh-run mean E[f(M_l)]. For convex f the first must not exceed
/// the second (up to 3 combined SE); for the linear case the two
/// must agree two-sided. The two samplers must be seeded on disjoint
/// streams: the right side is an independent copy by construction.
pub fn domination_test(
    paired: &dyn PathSampler,
    indep: &dyn PathSampler,
    f: TestFunction,
    k: usize,
    l: usize,
    reps: u64,
) -> Result<DominationRecord> {
    check_reps(reps)?;
    check_horizon(paired, k + l)?;
    check_horizon(indep, l)?;
    let lhs_state = map_moments_range(paired, 0, reps, &|_, path| {
        let base = path.values[k];
        if base > 0.0 {
            Ok(Some(f.eval(path.values[k + l] / base)))
        } else {
            Ok(None)
        }
    })?;
    let rhs_state = map_moments_range(indep, 0, reps, &|_, path| Ok(Some(f.eval(path.values[l]))))?;
    let survivors = lhs_state.n;
    let lhs = MomentEstimate::from_moments(format!("E[{f}(M_{}+{l}/M_{})]", k, k), lhs_state);
    let rhs = MomentEstimate::from_moments(format!("E[{f}(M_{l})]"), rhs_state);
    let combined_se = (lhs.std_error * lhs.std_error + rhs.std_error * rhs.std_error).sqrt();
    let (margin, verdict) = if survivors < MIN_SURVIVORS {
        (f64::NAN, Verdict::Inconclusive)
    } else if f.two_sided() {
        let m = 3.0 * combined_se - (lhs.mean - rhs.mean).abs();
        (m, if m >= 0.0 { Verdict::Pass } else { Verdict::Fail })
    } else {
        let m = rhs.mean + 3.0 * combined_se - lhs.mean;
        (m, if m >= 0.0 { Verdict::Pass } else { Verdict::Fail })
    };
    Ok(DominationRecord { function: f.to_string(), k, l, survivors, lhs, rhs, margin, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    #[serde(rename = "lp")]
    Lp,
    #[serde(rename = "negative-moment")]
    NegativeMoment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    Certified,
    Refused,
}

/// An explicit moment bound conditional on its empirical tail witness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Tail threshold t > 1 the witness was measured at.
    pub threshold: f64,
    /// Almost-sure one-step ratio constant K >= 1.
    pub k_const: f64,
    pub epsilon: f64,
    /// 1 + epsilon for L^p, -epsilon for negative moments.
    pub exponent: f64,
    /// 2*t^{1+eps} resp. 2*t^eps; a claim only when status is Certified.
    pub bound: f64,
    pub witness: TailEstimate,
    pub status: CertificateStatus,
    /// Horizon and hypothesis-vs-witness numbers; certificates are
    /// empirical because the tail is measured at finite horizon.
    pub note: String,
}

fn check_certificate_inputs(t: f64, k_const: f64) -> Result<()> {
    if !(t > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "certificate threshold must exceed 1, got {t}"
        )));
    }
    if !(k_const >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio constant must be at least 1, got {k_const}"
        )));
    }
    Ok(())
}

/// The pinned exponent rule t^eps <= 2, eps <= 1.
fn epsilon_for(t: f64) -> f64 {
    (std::f64::consts::LN_2 / t.ln()).min(1.0)
}

/// Certifies sup_n E[M_n^{1+eps}] <= 2*t^{1+eps} when the measured
/// sup-tail at t is conservatively below 1/(4K²t).
pub fn lp_certificate(tail: &TailEstimate, k_const: f64) -> Result<Certificate> {
    let t = tail.threshold;
    check_certificate_inputs(t, k_const)?;
    let epsilon = epsilon_for(t);
    let exponent = 1.0 + epsilon;
    let bound = 2.0 * t.powf(exponent);
    let hypothesis = 1.0 / (4.0 * k_const * k_const * t);
    let (status, note) = if tail.upper_conf <= hypothesis {
        (
            CertificateStatus::Certified,
            format!(
                "empirical: tail upper confidence {:.6e} within hypothesis {:.6e} at horizon {}",
                tail.upper_conf, hypothesis, tail.horizon
            ),
        )
    } else {
        (
            CertificateStatus::Refused,
            format!(
                "refused: tail upper confidence {:.6e} exceeds hypothesis {:.6e} by {:.6e} at horizon {}",
                tail.upper_conf,
                hypothesis,
                tail.upper_conf - hypothesis,
                tail.horizon
            ),
        )
    };
    Ok(Certificate {
        kind: CertificateKind::Lp,
        threshold: t,
        k_const,
        epsilon,
        exponent,
        bound,
        witness: tail.clone(),
        status,
        note,
    })
}

/// Certifies sup_n E[M_n^{-eps}] <= 2*t^eps when the measured inf-tail
/// (runs dipping to 1/t) is conservatively below 1/(4K²).
pub fn neg_moment_certificate(tail: &TailEstimate, k_const: f64) -> Result<Certificate> {
    let t = tail.threshold;
    check_certificate_inputs(t, k_const)?;
    let epsilon = epsilon_for(t);
    let bound = 2.0 * t.powf(epsilon);
    let hypothesis = 1.0 / (4.0 * k_const * k_const);
    let (status, note) = if tail.upper_conf <= hypothesis {
        (
            CertificateStatus::Certified,
            format!(
                "empirical: tail upper confidence {:.6e} within hypothesis {:.6e} at horizon {}",
                tail.upper_conf, hypothesis, tail.horizon
            ),
        )
    } else {
        (
            CertificateStatus::Refused,
            format!(
                "refused: tail upper confidence {:.6e} exceeds hypothesis {:.6e} by {:.6e} at horizon {}",
                tail.upper_conf,
                hypothesis,
                tail.upper_conf - hypothesis,
                tail.horizon
            ),
        )
    };
    Ok(Certificate {
        kind: CertificateKind::NegativeMoment,
        threshold: t,
        k_const,
        epsilon,
        exponent: -epsilon,
        bound,
        witness: tail.clone(),
        status,
        note,
    })
}

/// Numerical restatement of the bootstrap inequality an L^p
/// certificate stands on: with tail <= 1/(4K²t) and t^eps <= 2,
/// (Kt)^{1+eps}·tail <= t^eps/4 <= 1/2, so the self-referential moment
/// bound contracts. True for every certified certificate.
pub fn lp_soundness_chain(cert: &Certificate) -> bool {
    const SLACK: f64 = 1e-12;
    if cert.kind != CertificateKind::Lp || cert.status != CertificateStatus::Certified {
        return false;
    }
    let t = cert.threshold;
    let k = cert.k_const;
    let e = cert.epsilon;
    let t_eps = t.powf(e);
    let kt_pow = (k * t).powf(1.0 + e);
    let hypothesis = 1.0 / (4.0 * k * k * t);
    t_eps <= 2.0 * (1.0 + SLACK)
        && e <= 1.0 + SLACK
        && cert.witness.upper_conf <= hypothesis * (1.0 + SLACK)
        && kt_pow * hypothesis <= (t_eps / 4.0) * (1.0 + SLACK)
        && kt_pow * cert.witness.upper_conf <= 0.5 * t.powf(1.0 + e) * (1.0 + SLACK)
        && t_eps / 4.0 <= 0.5 * (1.0 + SLACK)
}

/// Finite-horizon reading of the strong-disorder tail floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongDisorderReport {
    /// Sup-tail at the full horizon.
    pub tail: TailEstimate,
    /// Sup-tail at half the horizon on the same replicate ids.
    pub half_tail: TailEstimate,
    pub k_const: f64,
    /// 1/(4K²t), the floor the infinite-horizon tail must exceed.
    pub floor: f64,
    /// Half-horizon hits never exceed full-horizon hits (nested events,
    /// exact on shared seeds).
    pub trend_ok: bool,
    /// False only when even the upper confidence bound sits below the
    /// floor, which a finite horizon cannot excuse.
    pub consistent: bool,
    pub note: String,
}

/// Measures P(max_{k<=n} M_k > t) at horizons n and n/2 on shared
/// seeds and reports both against the floor 1/(4K²t). Informational:
/// the finite-horizon tail only increases toward the limit, so a value
/// below the floor is expected early and damning only asymptotically.
pub fn strong_disorder_bound_check(
    sampler: &dyn PathSampler,
    t: f64,
    n: usize,
    reps: u64,
    k_const: f64,
) -> Result<StrongDisorderReport> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need horizon at least 2, got {n}")));
    }
    check_certificate_inputs(t, k_const)?;
    let tail = estimate_sup_tail(sampler, t, n, reps)?;
    let half_tail = estimate_sup_tail(sampler, t, n / 2, reps)?;
    let floor = 1.0 / (4.0 * k_const * k_const * t);
    let trend_ok = half_tail.hit_count <= tail.hit_count;
    let consistent = tail.upper_conf >= floor;
    let note = if consistent {
        format!(
            "informational: empirical tail {:.6e} (lower conf {:.6e}) vs floor {:.6e} at horizon {n}; \
             finite-horizon tails underestimate the limit",
            tail.point(),
            tail.lower_conf,
            floor
        )
    } else {
        format!(
            "finite-horizon check fails; consistent only with weak disorder \
             (tail upper confidence {:.6e} below floor {:.6e} at horizon {n})",
            tail.upper_conf, floor
        )
    };
    Ok(StrongDisorderReport { tail, half_tail, k_const, floor, trend_ok, consistent, note })
}
