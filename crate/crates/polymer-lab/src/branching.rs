//! Reference martingales with the same product structure as the polymer:
//! the Galton-Watson normalized population M_n = Z_n m^{-n} and the
//! branching-random-walk additive martingale
//! W^{(n)}(θ) = m(θ)^{-n} Σ_i e^{-θ z_i^{(n)}}, m(θ) = m·E[e^{-θ·disp}].
//!
//! Both have closed-form or generating-function oracles for small cases,
//! which is their whole job here: they cross-validate the generic
//! estimator and certificate machinery on processes whose answers are
//! known by other means.
//!
//! Stream discipline: offspring counts and displacements draw from
//! separate substreams of the caller's stream. Consequently a BRW at
//! θ = 0 consumes the identical offspring sequence as a GW run on the
//! same stream, and the two paths agree bit for bit.

use crate::disorder::{DisorderDist, RatioBounds};
use crate::polymer::MartingalePath;
use crate::rng::{CounterRng, SeedStream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hard guard on simulated individuals per generation.
pub const POPULATION_CAP: u64 = 10_000_000;

/// Probabilities on offspring support must sum to 1 within this slack.
const PROB_SUM_TOL: f64 = 1e-12;

const OFFSPRING_STREAM: u64 = 0x0FF5;
const DISPLACEMENT_STREAM: u64 = 0xD155;

/// Finite-support offspring law with its mean and variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringDist {
    atoms: Vec<(u64, f64)>,
    pub mean: f64,
    pub variance: f64,
}

impl OffspringDist {
    pub fn new(atoms: Vec<(u64, f64)>) -> Result<OffspringDist> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("offspring law needs at least one atom".into()));
        }
        let mut total = 0.0;
        for &(_, p) in &atoms {
            if !(p > 0.0) || p > 1.0 + PROB_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "offspring probability must lie in (0, 1], got {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "offspring probabilities sum to {total}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        let mean: f64 = atoms.iter().map(|&(k, p)| k as f64 * p).sum();
        let variance: f64 = atoms.iter().map(|&(k, p)| (k as f64 - mean).powi(2) * p).sum();
        Ok(OffspringDist { atoms, mean, variance })
    }

    /// Every individual has exactly k children.
    pub fn deterministic(k: u64) -> OffspringDist {
        OffspringDist::new(vec![(k, 1.0)]).expect("single unit atom is valid")
    }

    /// 1 or 2 children with probability 1/2 each (m = 3/2, σ² = 1/4).
    pub fn one_or_two() -> OffspringDist {
        OffspringDist::new(vec![(1, 0.5), (2, 0.5)]).expect("valid by construction")
    }

    pub fn atoms(&self) -> &[(u64, f64)] {
        &self.atoms
    }

    pub fn min_count(&self) -> u64 {
        self.atoms.iter().map(|&(k, _)| k).min().expect("nonempty")
    }

    pub fn max_count(&self) -> u64 {
        self.atoms.iter().map(|&(k, _)| k).max().expect("nonempty")
    }

    pub fn sample(&self, rng: &mut CounterRng) -> u64 {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for &(k, p) in &self.atoms {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.atoms.last().expect("nonempty").0
    }

    /// Probability generating function E[s^ξ].
    pub fn pgf(&self, s: f64) -> f64 {
        self.atoms.iter().map(|&(k, p)| p * s.powi(k as i32)).sum()
    }

    /// Almost-sure one-step ratio bounds of M: on survival,
    /// M_{n+1}/M_n ∈ [min_count/m, max_count/m].
    pub fn ratio_bounds(&self) -> RatioBounds {
        RatioBounds {
            upper: self.max_count() as f64 / self.mean,
            lower: self.min_count() as f64 / self.mean,
        }
    }
}

/// P(Z_n = 0): n-fold iteration of the generating function at 0.
pub fn extinction_prob_by(off: &OffspringDist, n: usize) -> f64 {
    let mut s = 0.0;
    for _ in 0..n {
        s = off.pgf(s);
    }
    s
}

/// Simulates Z_0 = 1, ..., Z_n individual by individual and returns
/// M_k = Z_k·m^{-k}. Absorbing at zero. Exceeding the population cap
/// aborts with the partial path inside the error.
pub fn gw_martingale_path(
    off: &OffspringDist,
    n: usize,
    stream: &SeedStream,
) -> Result<MartingalePath> {
    if off.mean <= 0.0 {
        return Err(Error::InvalidArgument(
            "offspring mean must be positive to normalize the martingale".into(),
        ));
    }
    let mut rng = stream.substream(OFFSPRING_STREAM).rng();
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    let mut pop: u64 = 1;
    let mut norm = 1.0f64;
    for step in 1..=n {
        let mut next: u64 = 0;
        for _ in 0..pop {
            next += off.sample(&mut rng);
            if next > POPULATION_CAP {
                return Err(Error::TruncatedRun {
                    step,
                    reason: format!("population exceeded the cap of {POPULATION_CAP}"),
                    partial: values,
                });
            }
        }
        pop = next;
        norm *= off.mean;
        values.push(pop as f64 / norm);
        if pop == 0 {
            while values.len() <= n {
                values.push(0.0);
            }
            break;
        }
    }
    Ok(MartingalePath::new(values, 0.0, 0))
}

/// E[M_n²] = 1 + σ² Σ_{j=0}^{n-1} m^{-j-2}, exactly (supercritical only;
/// at m ≤ 1 the normalized chain is trivial or the series diverges).
pub fn gw_second_moment_exact(off: &OffspringDist, n: usize) -> Result<f64> {
    if off.mean <= 1.0 {
        return Err(Error::Unsupported(format!(
            "second-moment recursion needs mean > 1, got {}",
            off.mean
        )));
    }
    let m = off.mean;
    let mut sum = 0.0;
    let mut pow = 1.0 / (m * m);
    for _ in 0..n {
        sum += pow;
        pow /= m;
    }
    Ok(1.0 + off.variance * sum)
}

/// lim_n E[M_n²] = 1 + σ²/(m(m−1)).
pub fn gw_second_moment_limit(off: &OffspringDist) -> Result<f64> {
    if off.mean <= 1.0 {
        return Err(Error::Unsupported(format!(
            "second-moment limit needs mean > 1, got {}",
            off.mean
        )));
    }
    Ok(1.0 + off.variance / (off.mean * (off.mean - 1.0)))
}

/// A branching random walk observed through e^{-θ·position}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrwSpec {
    pub offspring: OffspringDist,
    pub displacement: DisorderDist,
    pub theta: f64,
    /// m(θ) = m·E[e^{-θ·displacement}], the per-step normalizer.
    pub m_theta: f64,
}

impl BrwSpec {
    pub fn new(
        offspring: OffspringDist,
        displacement: DisorderDist,
        theta: f64,
    ) -> Result<BrwSpec> {
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("theta must be finite, got {theta}")));
        }
        let m_theta = offspring.mean * displacement.log_mgf(-theta)?.exp();
        if !(m_theta > 0.0) || !m_theta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "m(theta) = {m_theta} must be positive and finite"
            )));
        }
        Ok(BrwSpec { offspring, displacement, theta, m_theta })
    }
}

/// Σ_i e^{-θ z_i}, max-shifted so extreme positions cannot overflow.
/// At θ = 0 this is the exact particle count, which is what makes the
/// θ = 0 path bit-identical to the GW path on the same stream.
fn weight_sum(positions: &[f64], theta: f64) -> f64 {
    if theta == 0.0 {
        return positions.len() as f64;
    }
    let max = positions.iter().map(|&z| -theta * z).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = positions.iter().map(|&z| (-theta * z - max).exp()).sum();
    (max + sum.ln()).exp()
}

/// Simulates the branching random walk per particle and returns
/// W^{(k)}(θ) for k = 0..n. Absorbing at zero; the particle cap aborts
/// with the partial path.
pub fn brw_martingale_path(
    spec: &BrwSpec,
    n: usize,
    stream: &SeedStream,
) -> Result<MartingalePath> {
    let mut off_rng = stream.substream(OFFSPRING_STREAM).rng();
    let mut disp_rng = stream.substream(DISPLACEMENT_STREAM).rng();
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    let mut positions: Vec<f64> = vec![0.0];
    let mut norm = 1.0f64;
    for step in 1..=n {
        let mut next = Vec::with_capacity(positions.len() * 2);
        for &z in &positions {
            let children = spec.offspring.sample(&mut off_rng);
            if next.len() as u64 + children > POPULATION_CAP {
                return Err(Error::TruncatedRun {
                    step,
                    reason: format!("particle count exceeded the cap of {POPULATION_CAP}"),
                    partial: values,
                });
            }
            for _ in 0..children {
                next.push(z + spec.displacement.sample(&mut disp_rng));
            }
        }
        positions = next;
        norm *= spec.m_theta;
        values.push(weight_sum(&positions, spec.theta) / norm);
        if positions.is_empty() {
            while values.len() <= n {
                values.push(0.0);
            }
            break;
        }
    }
    Ok(MartingalePath::new(values, spec.theta, 0))
}
