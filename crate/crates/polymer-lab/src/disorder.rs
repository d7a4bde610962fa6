//! Site-disorder laws: exact log moment generating function, essential
//! bounds, one-step martingale ratio bounds, and reproducible sampling.
//!
//! Finite-support distributions are the primary citizens: they keep the
//! environment bounded, which is what makes the ratio bounds finite and
//! the certificate machinery applicable. The gaussian law is carried as
//! an unbounded control case; certificate constructors refuse it.

use crate::rng::{normal_from_words, to_unit_f64, CounterRng};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Probabilities on finite support must sum to 1 within this slack.
const PROB_SUM_TOL: f64 = 1e-12;

/// A site-disorder distribution with exactly computable λ(β).
///
/// Finite atoms may carry the value `-inf` (a site that kills any path
/// through it, the oriented-percolation flavor); `log_mgf` stays finite
/// for β > 0 as long as some finite atom has positive mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DisorderDist {
    /// Atoms `(value, prob)` in a fixed canonical order.
    Finite {
        atoms: Vec<(f64, f64)>,
    },
    Gaussian {
        mean: f64,
        var: f64,
    },
}

impl DisorderDist {
    /// ±1 with probability 1/2 each.
    pub fn rademacher() -> Self {
        DisorderDist::Finite { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] }
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::discrete(vec![(value, 1.0)])
    }

    /// Finite-support law from `(value, prob)` atoms. Atom order is kept
    /// as given and becomes the canonical summation/sampling order.
    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument(
                "finite-support distribution needs at least one atom".into(),
            ));
        }
        let mut total = 0.0;
        let mut any_finite = false;
        for &(v, p) in &atoms {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::InvalidArgument(format!(
                    "atom value must be finite or -inf, got {v}"
                )));
            }
            if !(p > 0.0) || p > 1.0 + PROB_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "atom probability must lie in (0, 1], got {p}"
                )));
            }
            any_finite |= v.is_finite();
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "atom probabilities sum to {total}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        if !any_finite {
            return Err(Error::InvalidArgument(
                "all mass sits at -inf; every path weight would vanish".into(),
            ));
        }
        Ok(DisorderDist::Finite { atoms })
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !var.is_finite() || var <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian needs finite mean and var > 0, got mean={mean}, var={var}"
            )));
        }
        Ok(DisorderDist::Gaussian { mean, var })
    }

    /// Parses the config syntax: `rademacher`,
    /// `discrete:[(v1,p1),(v2,p2),...]`, or `gaussian:mean,var`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "rademacher" {
            return Ok(Self::rademacher());
        }
        if let Some(rest) = text.strip_prefix("gaussian:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Config(format!(
                    "gaussian spec needs `gaussian:mean,var`, got `{text}`"
                )));
            }
            let mean = parse_real(parts[0])?;
            let var = parse_real(parts[1])?;
            return Self::gaussian(mean, var);
        }
        if let Some(rest) = text.strip_prefix("discrete:") {
            let rest = rest.trim();
            let inner =
                rest.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or_else(|| {
                    Error::Config(format!("discrete spec needs `[(v,p),...]`, got `{rest}`"))
                })?;
            let mut atoms = Vec::new();
            let mut depth = 0usize;
            let mut start = 0usize;
            let bytes = inner.as_bytes();
            for (i, &b) in bytes.iter().enumerate() {
                match b {
                    b'(' => depth += 1,
                    b')' => {
                        depth = depth.checked_sub(1).ok_or_else(|| {
                            Error::Config(format!("unbalanced parentheses in `{text}`"))
                        })?;
                        if depth == 0 {
                            atoms.push(parse_atom(&inner[start..=i])?);
                        }
                    }
                    b',' if depth == 0 => start = i + 1,
                    _ => {}
                }
            }
            if depth != 0 {
                return Err(Error::Config(format!("unbalanced parentheses in `{text}`")));
            }
            return Self::discrete(atoms);
        }
        Err(Error::Config(format!(
            "unknown distribution spec `{text}` (expected rademacher, discrete:[...], or gaussian:m,v)"
        )))
    }

    /// The config syntax back out: `Display` and `parse` round-trip.
    pub fn spec_string(&self) -> String {
        if *self == Self::rademacher() {
            return "rademacher".into();
        }
        match self {
            DisorderDist::Gaussian { mean, var } => format!("gaussian:{mean},{var}"),
            DisorderDist::Finite { atoms } => {
                let body: Vec<String> = atoms.iter().map(|&(v, p)| format!("({v},{p})")).collect();
                format!("discrete:[{}]", body.join(","))
            }
        }
    }

    /// Largest support value; `+inf` for gaussian.
    pub fn ess_sup(&self) -> f64 {
        match self {
            DisorderDist::Finite { atoms } => {
                atoms.iter().map(|&(v, _)| v).fold(f64::NEG_INFINITY, f64::max)
            }
            DisorderDist::Gaussian { .. } => f64::INFINITY,
        }
    }

    /// Smallest support value; `-inf` for gaussian.
    pub fn ess_inf(&self) -> f64 {
        match self {
            DisorderDist::Finite { atoms } => {
                atoms.iter().map(|&(v, _)| v).fold(f64::INFINITY, f64::min)
            }
            DisorderDist::Gaussian { .. } => f64::NEG_INFINITY,
        }
    }

    /// λ(β) = log E[e^{βω}], exact: closed form for gaussian, max-shifted
    /// log-sum-exp in canonical atom order for finite support.
    /// λ(0) = 0 exactly.
    pub fn log_mgf(&self, beta: f64) -> Result<f64> {
        if !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("log_mgf needs finite beta, got {beta}")));
        }
        if beta == 0.0 {
            return Ok(0.0);
        }
        match self {
            DisorderDist::Finite { atoms } => {
                if beta < 0.0 && atoms.iter().any(|&(v, _)| v == f64::NEG_INFINITY) {
                    return Err(Error::Domain(
                        "E[e^{beta*omega}] diverges: beta < 0 with a -inf atom".into(),
                    ));
                }
                let m = atoms.iter().map(|&(v, _)| beta * v).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = atoms.iter().map(|&(v, p)| p * (beta * v - m).exp()).sum();
                Ok(m + sum.ln())
            }
            DisorderDist::Gaussian { mean, var } => Ok(mean * beta + var * beta * beta / 2.0),
        }
    }

    /// One draw using the stream's sequential generator.
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match self {
            DisorderDist::Finite { atoms } => {
                let u = rng.next_f64();
                atoms[self.atom_index(u)].0
            }
            DisorderDist::Gaussian { mean, var } => mean + var.sqrt() * rng.next_normal(),
        }
    }

    /// One draw as a pure function of two counter words, for
    /// site-addressed environments.
    pub fn value_from_words(&self, w0: u64, w1: u64) -> f64 {
        match self {
            DisorderDist::Finite { atoms } => atoms[self.atom_index(to_unit_f64(w0))].0,
            DisorderDist::Gaussian { mean, var } => mean + var.sqrt() * normal_from_words(w0, w1),
        }
    }

    /// Atom index drawn from one counter word. Finite support only.
    pub fn atom_from_words(&self, w0: u64) -> usize {
        self.atom_index(to_unit_f64(w0))
    }

    fn atom_index(&self, u: f64) -> usize {
        match self {
            DisorderDist::Finite { atoms } => {
                // Inverse CDF walk in canonical order; the final atom
                // absorbs the accumulated rounding of the partial sums.
                let mut acc = 0.0;
                for (i, &(_, p)) in atoms.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                atoms.len() - 1
            }
            DisorderDist::Gaussian { .. } => {
                unreachable!("atom_index is defined for finite support only")
            }
        }
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match self {
            DisorderDist::Finite { atoms } => Some(atoms),
            DisorderDist::Gaussian { .. } => None,
        }
    }

    pub fn is_bounded_above(&self) -> bool {
        self.ess_sup().is_finite()
    }

    pub fn is_bounded_below(&self) -> bool {
        self.ess_inf().is_finite()
    }

    /// Almost-sure one-step ratio bounds for the normalized partition
    /// martingale: W_{n+1}/W_n lies in `[lower, upper]` with
    /// upper = exp(β·ess_sup − λ(β)), lower = exp(β·ess_inf − λ(β)).
    /// `upper` is `+inf` and `lower` is `0` when the corresponding
    /// support bound is absent. At β = 0 both are exactly 1.
    pub fn ratio_bounds(&self, beta: f64) -> Result<RatioBounds> {
        if beta == 0.0 {
            return Ok(RatioBounds { upper: 1.0, lower: 1.0 });
        }
        let lambda = self.log_mgf(beta)?;
        let up = beta * self.ess_sup();
        let lo = beta * self.ess_inf();
        // beta < 0 swaps which support end controls which ratio end.
        let (hi_arg, lo_arg) = if beta > 0.0 { (up, lo) } else { (lo, up) };
        Ok(RatioBounds { upper: (hi_arg - lambda).exp(), lower: (lo_arg - lambda).exp() })
    }
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("expected a real number, got `{s}`")))
}

fn parse_atom(s: &str) -> Result<(f64, f64)> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("expected `(value,prob)`, got `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("expected `(value,prob)`, got `{s}`")));
    }
    let v = if parts[0].trim() == "-inf" { f64::NEG_INFINITY } else { parse_real(parts[0])? };
    Ok((v, parse_real(parts[1])?))
}

impl std::fmt::Display for DisorderDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.spec_string())
    }
}

/// Almost-sure bounds on one martingale step, `W_{n+1}/W_n ∈ [lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub upper: f64,
    pub lower: f64,
}

impl RatioBounds {
    /// The single constant K ≥ 1 with M_{n+1} ≤ K·M_n and M_{n+1} ≥ M_n/K
    /// almost surely: max(upper, 1/lower). Infinite when either side is
    /// unbounded, in which case certificates refuse to apply.
    pub fn k_m(&self) -> f64 {
        let from_lower = if self.lower > 0.0 { 1.0 / self.lower } else { f64::INFINITY };
        self.upper.max(from_lower).max(1.0)
    }
}
