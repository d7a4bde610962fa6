//! The directed-polymer partition function and its normalized martingale.
//!
//! For an environment ω of i.i.d. site variables on {1..n} × Z^d and a
//! nearest-neighbor walk X started at the origin, the partition function
//! is Z_n(ω) = E_X[exp(β Σ_{t≤n} ω_{t,X_t})] and the martingale is
//! W_n = Z_n e^{-nλ(β)} with λ the disorder's log moment generating
//! function. Everything here is exact dynamic programming over the
//! reachable cone; Monte Carlo enters only through the choice of ω.
//!
//! Numerics: a slice stores Z_t(x) = vals[i] · 2^scale_exp · (2d)^{-t}
//! with one shared power-of-two scale, rescaled when the slice maximum
//! drifts past 2^±512. Power-of-two rescaling is exact, the vals spread
//! within a slice is bounded by exp(2β‖ω‖∞ t), and slice sums run in
//! ascending key order, so results are deterministic and never over- or
//! underflow for any horizon this crate accepts. Martingale values are
//! accumulated as products of one-step ratios, which keeps W_n exactly 1
//! in the couplings where it is identically 1 (β = 0, constant-zero
//! environment) without special casing.

use crate::accum::pow2;
use crate::disorder::DisorderDist;
use crate::lattice::{add_neighbor_vals, Cone, LatticePoint, AXIS_STRIDE};
use crate::rng::SeedStream;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Path-count guard for the brute-force oracle: (2d)^n at most this.
const BRUTE_FORCE_MAX_PATHS: f64 = 1e7;

/// Rescale a slice once its maximum leaves [2^-512, 2^512].
const RESCALE_THRESHOLD: i64 = 512;

/// One replicate's site environment, derived lazily: the value at
/// (t, x) is a pure function of (stream, t, x), so shifted views and
/// repeated queries always agree without materializing the field.
#[derive(Clone, Debug)]
pub struct EnvField {
    pub dist: DisorderDist,
    pub replicate_id: u64,
    stream: SeedStream,
}

impl EnvField {
    /// `base` scopes the environment domain (and run); the replicate id
    /// separates independent environments within it.
    pub fn new(dist: DisorderDist, base: &SeedStream, replicate_id: u64) -> EnvField {
        EnvField { dist, replicate_id, stream: base.substream(replicate_id) }
    }

    /// View of this field under the space-time shift
    /// (t, x) -> (k + t, y + x).
    pub fn shifted(&self, k: usize, y: &LatticePoint) -> ShiftedEnv<'_> {
        ShiftedEnv { base: self, time_offset: k, key_offset: y.key_offset() }
    }
}

/// Read access to one time-slice of site values.
pub struct EnvRow<'a> {
    dist: &'a DisorderDist,
    stream: SeedStream,
    key_offset: u64,
}

impl EnvRow<'_> {
    #[inline]
    fn words(&self, key: u64) -> (u64, u64) {
        self.stream.words_at(key.wrapping_add(self.key_offset))
    }

    #[inline]
    pub fn value_at_key(&self, key: u64) -> f64 {
        let (w0, w1) = self.words(key);
        self.dist.value_from_words(w0, w1)
    }

    /// Atom index at a site; finite-support disorder only.
    #[inline]
    pub fn atom_at_key(&self, key: u64) -> usize {
        let (w0, _) = self.words(key);
        self.dist.atom_from_words(w0)
    }
}

/// A (possibly shifted) view of an i.i.d. site environment.
pub trait Environment {
    fn dist(&self) -> &DisorderDist;
    fn row(&self, t: usize) -> EnvRow<'_>;

    fn value(&self, t: usize, x: &LatticePoint) -> f64 {
        self.row(t).value_at_key(x.key())
    }
}

impl Environment for EnvField {
    fn dist(&self) -> &DisorderDist {
        &self.dist
    }

    fn row(&self, t: usize) -> EnvRow<'_> {
        EnvRow { dist: &self.dist, stream: self.stream.substream(t as u64), key_offset: 0 }
    }
}

/// Shifted environment view: row t reads the base field's row k + t at
/// keys translated by y. Same replicate, same values, new indexing.
pub struct ShiftedEnv<'a> {
    base: &'a EnvField,
    time_offset: usize,
    key_offset: u64,
}

impl Environment for ShiftedEnv<'_> {
    fn dist(&self) -> &DisorderDist {
        &self.base.dist
    }

    fn row(&self, t: usize) -> EnvRow<'_> {
        EnvRow {
            dist: &self.base.dist,
            stream: self.base.stream.substream((self.time_offset + t) as u64),
            key_offset: self.key_offset,
        }
    }
}

/// One time-slice of the partition DP over the reachable parity cone.
/// `vals[i]` belongs to `keys[i]`; keys ascend. The represented value is
/// Z_time(x_i) = vals[i] · 2^scale_exp · (2d)^{-time}.
#[derive(Clone, Debug)]
pub struct Slice {
    pub time: usize,
    pub dim: usize,
    pub scale_exp: i64,
    pub keys: Arc<[u64]>,
    pub vals: Vec<f64>,
}

impl Slice {
    /// Sum of vals in fixed ascending-key order.
    pub fn total(&self) -> f64 {
        self.vals.iter().sum()
    }

    /// log Z_time, absorbing the slice scale and walk normalization.
    pub fn log_partition(&self) -> f64 {
        self.total().ln() + self.scale_exp as f64 * std::f64::consts::LN_2
            - self.time as f64 * (2.0 * self.dim as f64).ln()
    }

    /// Endpoint polymer measure μ(x) = Z_time(x)/Z_time, in ascending
    /// key order. Sums to 1 within ~|slice| rounding units.
    pub fn endpoint_measure(&self) -> Vec<(LatticePoint, f64)> {
        let total = self.total();
        self.keys
            .iter()
            .zip(&self.vals)
            .map(|(&k, &v)| (LatticePoint::from_key(k), v / total))
            .collect()
    }
}

/// The martingale trajectory W_0..W_n of one environment replicate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MartingalePath {
    pub values: Vec<f64>,
    pub running_max: f64,
    pub running_min: f64,
    pub beta: f64,
    pub dim: usize,
}

impl MartingalePath {
    pub fn new(values: Vec<f64>, beta: f64, dim: usize) -> MartingalePath {
        debug_assert!(!values.is_empty() && values[0] == 1.0);
        let running_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let running_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        MartingalePath { values, running_max, running_min, beta, dim }
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("paths hold at least W_0")
    }

    /// First k with W_k > level, if the running maximum ever passes it.
    pub fn first_passage_above(&self, level: f64) -> Option<usize> {
        self.values.iter().position(|&w| w > level)
    }
}

/// Everything fixed across replicates of one polymer experiment:
/// dimension, coupling, disorder law with its λ(β), per-step weight
/// table, and the reachable cone up to the horizon.
#[derive(Clone, Debug)]
pub struct PolymerModel {
    pub dist: DisorderDist,
    pub beta: f64,
    pub dim: usize,
    pub lambda: f64,
    /// (2d)·e^λ: the per-step normalizer turning Z ratios into W ratios.
    step_norm: f64,
    /// e^{β v_j} per atom for finite support; `None` for gaussian.
    atom_weights: Option<Vec<f64>>,
    cone: Cone,
}

impl PolymerModel {
    pub fn new(dist: DisorderDist, beta: f64, dim: usize, horizon: usize) -> Result<PolymerModel> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coupling beta must be finite and nonnegative, got {beta}"
            )));
        }
        let lambda = dist.log_mgf(beta)?;
        let cone = Cone::build(dim, horizon)?;
        let atom_weights =
            dist.atoms().map(|atoms| atoms.iter().map(|&(v, _)| (beta * v).exp()).collect());
        Ok(PolymerModel {
            step_norm: 2.0 * dim as f64 * lambda.exp(),
            dist,
            beta,
            dim,
            lambda,
            atom_weights,
            cone,
        })
    }

    pub fn horizon(&self) -> usize {
        self.cone.horizon()
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    fn check_env(&self, env: &impl Environment) -> Result<()> {
        if env.dist() != &self.dist {
            return Err(Error::InvalidArgument(
                "environment distribution differs from the model's".into(),
            ));
        }
        Ok(())
    }

    pub fn initial_slice(&self) -> Slice {
        Slice {
            time: 0,
            dim: self.dim,
            scale_exp: 0,
            keys: self.cone.keys_by_time[0].clone(),
            vals: vec![1.0],
        }
    }

    /// Multiplies each val by the site weight e^{βω} of its own key.
    fn apply_site_weights(&self, row: &EnvRow, keys: &[u64], vals: &mut [f64]) {
        match &self.atom_weights {
            Some(table) => {
                for (v, &k) in vals.iter_mut().zip(keys) {
                    *v *= table[row.atom_at_key(k)];
                }
            }
            None => {
                for (v, &k) in vals.iter_mut().zip(keys) {
                    *v *= (self.beta * row.value_at_key(k)).exp();
                }
            }
        }
    }

    /// One forward DP step: Z_{t+1}(x) = e^{βω_{t+1,x}} · (2d)^{-1} Σ_{y~x} Z_t(y)
    /// (the (2d)^{-1} lives in the slice normalization, not in vals).
    pub fn step(&self, prev: &Slice, env: &impl Environment) -> Slice {
        let time = prev.time + 1;
        debug_assert!(time <= self.horizon(), "stepping past the built cone");
        let keys = self.cone.keys_by_time[time].clone();
        let mut vals = vec![0.0f64; keys.len()];
        for &stride in &AXIS_STRIDE[..self.dim] {
            add_neighbor_vals(&prev.keys, &prev.vals, &keys, &mut vals, stride);
            add_neighbor_vals(&prev.keys, &prev.vals, &keys, &mut vals, stride.wrapping_neg());
        }
        self.apply_site_weights(&env.row(time), &keys, &mut vals);
        let mut scale_exp = prev.scale_exp;
        rescale_if_needed(&mut vals, &mut scale_exp);
        Slice { time, dim: self.dim, scale_exp, keys, vals }
    }

    /// Runs the DP to horizon n and reads off W_0..W_n.
    ///
    /// W is accumulated through one-step ratios
    /// W_{t+1}/W_t = (total_{t+1}/total_t) · 2^{Δscale} / ((2d)·e^λ),
    /// so W_k is exact whenever every slice total is integer-exact and
    /// the normalizer is exact (β = 0 in moderate horizons).
    pub fn run(&self, env: &impl Environment, n: usize) -> Result<MartingalePath> {
        Ok(self.evolve(env, n, |_| ())?.0)
    }

    /// Like [`run`](Self::run), also returning every slice (for endpoint
    /// measures and split checks).
    pub fn slices(&self, env: &impl Environment, n: usize) -> Result<(MartingalePath, Vec<Slice>)> {
        let mut kept = Vec::with_capacity(n + 1);
        let (path, last) = self.evolve(env, n, |s| kept.push(s.clone()))?;
        kept.push(last);
        Ok((path, kept))
    }

    fn evolve(
        &self,
        env: &impl Environment,
        n: usize,
        mut on_slice: impl FnMut(&Slice),
    ) -> Result<(MartingalePath, Slice)> {
        self.check_env(env)?;
        if n > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "horizon {n} exceeds the model's built cone ({})",
                self.horizon()
            )));
        }
        let mut values = Vec::with_capacity(n + 1);
        values.push(1.0);
        let mut w = 1.0f64;
        let mut slice = self.initial_slice();
        let mut prev_total = 1.0f64;
        for _ in 0..n {
            on_slice(&slice);
            let prev_scale = slice.scale_exp;
            slice = self.step(&slice, env);
            let total = slice.total();
            if total == 0.0 {
                // Every open path got killed by a -inf site; W is
                // absorbed at zero from here on.
                while values.len() <= n {
                    values.push(0.0);
                }
                while slice.time < n {
                    slice = self.step(&slice, env);
                }
                break;
            }
            let ratio =
                total / prev_total * pow2((slice.scale_exp - prev_scale) as i32) / self.step_norm;
            w *= ratio;
            values.push(w);
            prev_total = total;
        }
        Ok((MartingalePath::new(values, self.beta, self.dim), slice))
    }

    /// W_l in the environment shifted by (k, y): the value the martingale
    /// restarted at space-time point (k, y) would take after l steps.
    pub fn shifted_martingale(
        &self,
        env: &EnvField,
        k: usize,
        y: &LatticePoint,
        l: usize,
    ) -> Result<f64> {
        let view = env.shifted(k, y);
        Ok(self.run(&view, l)?.final_value())
    }

    /// Backward partition sweep from horizon m: returns per time j ≤ m a
    /// slice with vals[i] · 2^scale_exp · (2d)^{-(m-j)} = the partition
    /// function of the walk segment from (j, x_i) to time m, i.e.
    /// W_{m-j} ∘ θ_{j,x_i} before the e^{-(m-j)λ} normalization.
    fn backward_slices(&self, env: &impl Environment, m: usize) -> Result<Vec<Slice>> {
        self.check_env(env)?;
        if m > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "horizon {m} exceeds the model's built cone ({})",
                self.horizon()
            )));
        }
        let mut out = Vec::with_capacity(m + 1);
        let keys = self.cone.keys_by_time[m].clone();
        let vals = vec![1.0f64; keys.len()];
        out.push(Slice { time: m, dim: self.dim, scale_exp: 0, keys, vals });
        for j in (0..m).rev() {
            let next = out.last().expect("seeded above");
            // Weight the j+1 slice at its own sites, then gather: the
            // step weight sits on the segment's first move target.
            let mut weighted = next.vals.clone();
            self.apply_site_weights(&env.row(j + 1), &next.keys, &mut weighted);
            let keys = self.cone.keys_by_time[j].clone();
            let mut vals = vec![0.0f64; keys.len()];
            for &stride in &AXIS_STRIDE[..self.dim] {
                add_neighbor_vals(&next.keys, &weighted, &keys, &mut vals, stride);
                add_neighbor_vals(&next.keys, &weighted, &keys, &mut vals, stride.wrapping_neg());
            }
            let mut scale_exp = next.scale_exp;
            rescale_if_needed(&mut vals, &mut scale_exp);
            out.push(Slice { time: j, dim: self.dim, scale_exp, keys, vals });
        }
        out.reverse();
        Ok(out)
    }

    /// Relative residuals of the product identity
    /// W_m/W_k = Σ_y μ_k(y) · (W_{m-k} ∘ θ_{k,y}) for every split k ≤ m.
    ///
    /// Forward-by-k and backward-from-m sweeps associate the full path
    /// sum differently, so agreement is a real numerical check, not a
    /// tautology. Entry k is |rhs/lhs − 1|.
    pub fn product_split_residuals(&self, env: &EnvField, m: usize) -> Result<Vec<f64>> {
        let (_, forward) = self.slices(env, m)?;
        let backward = self.backward_slices(env, m)?;
        let last = &forward[m];
        let total_m = last.total();
        if total_m == 0.0 {
            return Err(Error::Internal(
                "partition function hit zero; split checks need strictly positive weights \
                 (finite-support disorder without -inf atoms)"
                    .into(),
            ));
        }
        let log_zm = total_m.ln() + last.scale_exp as f64 * std::f64::consts::LN_2;
        let mut residuals = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let f = &forward[k];
            let b = &backward[k];
            debug_assert!(Arc::ptr_eq(&f.keys, &b.keys));
            let dot: f64 = f.vals.iter().zip(&b.vals).map(|(&x, &y)| x * y).sum();
            if dot == 0.0 {
                return Err(Error::Internal(format!(
                    "split sum vanished at k={k}; W_k = 0 should be impossible here"
                )));
            }
            let log_split = dot.ln() + (f.scale_exp + b.scale_exp) as f64 * std::f64::consts::LN_2;
            residuals.push((log_split - log_zm).exp_m1().abs());
        }
        Ok(residuals)
    }

    /// Residual of the k/l product split, relative to W_{k+l}/W_k.
    pub fn product_identity_check(&self, env: &EnvField, k: usize, l: usize) -> Result<f64> {
        Ok(self.product_split_residuals(env, k + l)?[k])
    }
}

/// Exact power-of-two renormalization once the slice maximum drifts past
/// 2^±512; keeps every later product and sum in comfortable f64 range.
fn rescale_if_needed(vals: &mut [f64], scale_exp: &mut i64) {
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return;
    }
    let e = ((max.to_bits() >> 52) & 0x7FF) as i64 - 1023;
    if e.abs() > RESCALE_THRESHOLD {
        let f = pow2(-e as i32);
        for v in vals.iter_mut() {
            *v *= f;
        }
        *scale_exp += e;
    }
}

/// log Z_n by explicit enumeration of all (2d)^n nearest-neighbor paths,
/// summing exp(βH) per path. Deliberately shares nothing with the DP
/// beyond the environment itself; this is the oracle the DP is checked
/// against. Guarded to (2d)^n ≤ 10^7 paths.
pub fn brute_force_log_partition(
    env: &impl Environment,
    beta: f64,
    n: usize,
    dim: usize,
) -> Result<f64> {
    let paths = (2.0 * dim as f64).powi(n as i32);
    if paths > BRUTE_FORCE_MAX_PATHS {
        return Err(Error::TooLarge(format!(
            "brute force refuses (2·{dim})^{n} = {paths:.3e} paths (limit {BRUTE_FORCE_MAX_PATHS:e})"
        )));
    }
    struct Walk<'a, E: Environment> {
        env: &'a E,
        beta: f64,
        n: usize,
        dim: usize,
        x: [i16; crate::lattice::MAX_DIM],
        sum: f64,
    }
    impl<E: Environment> Walk<'_, E> {
        fn visit(&mut self, t: usize, energy: f64) {
            if t == self.n {
                self.sum += (self.beta * energy).exp();
                return;
            }
            for axis in 0..self.dim {
                for step in [1i16, -1] {
                    self.x[axis] += step;
                    let site = self.env.value(t + 1, &LatticePoint { coords: self.x });
                    self.visit(t + 1, energy + site);
                    self.x[axis] -= step;
                }
            }
        }
    }
    let mut walk = Walk { env, beta, n, dim, x: [0i16; crate::lattice::MAX_DIM], sum: 0.0 };
    walk.visit(0, 0.0);
    Ok(walk.sum.ln() - n as f64 * (2.0 * dim as f64).ln())
}
