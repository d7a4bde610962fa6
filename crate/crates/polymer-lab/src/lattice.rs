//! Lattice points and their packed-key encoding.
//!
//! A point in Z^d (d ≤ 4) packs into one u64: four 16-bit lanes, each
//! coordinate biased by 2^15, most significant lane first. The packing
//! is chosen so that
//!   - ascending key order equals lexicographic coordinate order, and
//!   - moving one step along axis i is `key ± AXIS_STRIDE[i]`, with no
//!     lane carry as long as every coordinate stays well inside ±2^15.
//!
//! Dynamic-programming slices therefore store sorted key vectors and
//! walk neighbors with monotone cursors instead of hash lookups.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 4;

/// Coordinates above this never occur; the bound keeps one neighbor step
/// away from the lane boundary.
pub const MAX_COORD: i16 = 16384;

const BIAS: u64 = 1 << 15;

/// Key of the origin: every lane at its bias.
pub const ORIGIN_KEY: u64 = (BIAS << 48) | (BIAS << 32) | (BIAS << 16) | BIAS;

/// `AXIS_STRIDE[i]` is the key increment of a +1 step along axis i.
pub const AXIS_STRIDE: [u64; MAX_DIM] = [1 << 48, 1 << 32, 1 << 16, 1];

/// A site of Z^d. Lanes beyond `dim` stay zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coords: [i16; MAX_DIM],
}

impl LatticePoint {
    pub fn origin() -> Self {
        LatticePoint { coords: [0; MAX_DIM] }
    }

    pub fn new(coords: &[i16]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "lattice dimension must be 1..={MAX_DIM}, got {}",
                coords.len()
            )));
        }
        let mut c = [0i16; MAX_DIM];
        for (i, &v) in coords.iter().enumerate() {
            if v.unsigned_abs() > MAX_COORD as u16 {
                return Err(Error::TooLarge(format!(
                    "coordinate {v} exceeds the packed-key range ±{MAX_COORD}"
                )));
            }
            c[i] = v;
        }
        Ok(LatticePoint { coords: c })
    }

    #[inline]
    pub fn key(&self) -> u64 {
        let lane = |c: i16| (c as i32 + BIAS as i32) as u64;
        lane(self.coords[0]) << 48
            | lane(self.coords[1]) << 32
            | lane(self.coords[2]) << 16
            | lane(self.coords[3])
    }

    pub fn from_key(key: u64) -> Self {
        let lane = |shift: u32| (((key >> shift) & 0xFFFF) as i32 - BIAS as i32) as i16;
        LatticePoint { coords: [lane(48), lane(32), lane(16), lane(0)] }
    }

    pub fn l1_norm(&self) -> u32 {
        self.coords.iter().map(|&c| c.unsigned_abs() as u32).sum()
    }

    /// Key translation by `self`, for environment shifts: maps the key of
    /// x to the key of x + self. Valid while both stay in coord range.
    #[inline]
    pub fn key_offset(&self) -> u64 {
        self.key().wrapping_sub(ORIGIN_KEY)
    }
}

/// The reachable space-time cone of a walk started at the origin:
/// `keys_by_time[t]` lists, in ascending key order, every point with
/// ‖x‖₁ ≤ t and ‖x‖₁ ≡ t (mod 2).
///
/// Built once per (dim, horizon); the per-time key vectors are shared
/// (cheaply cloned) into every DP slice that uses them.
#[derive(Clone, Debug)]
pub struct Cone {
    pub dim: usize,
    pub keys_by_time: Vec<std::sync::Arc<[u64]>>,
}

impl Cone {
    pub fn build(dim: usize, horizon: usize) -> Result<Cone> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if horizon > MAX_COORD as usize {
            return Err(Error::TooLarge(format!(
                "horizon {horizon} exceeds the packed-key coordinate range {MAX_COORD}"
            )));
        }
        let keys_by_time = (0..=horizon).map(|t| ball_keys(dim, t).into()).collect();
        Ok(Cone { dim, keys_by_time })
    }

    pub fn horizon(&self) -> usize {
        self.keys_by_time.len() - 1
    }
}

/// All keys with ‖x‖₁ ≤ radius and ‖x‖₁ ≡ radius (mod 2), ascending.
/// This is exactly the support of a walk from the origin after `radius`
/// steps, and of any parity-matching process confined to that ball.
pub fn ball_keys(dim: usize, radius: usize) -> Vec<u64> {
    debug_assert!((1..=MAX_DIM).contains(&dim));
    debug_assert!(radius <= MAX_COORD as usize);
    let mut keys = Vec::new();
    let mut coords = [0i16; MAX_DIM];
    enumerate_ball(dim, radius as i32, 0, &mut coords, &mut keys);
    debug_assert!(keys.windows(2).all(|w| w[0] < w[1]));
    keys
}

/// `out[j] += src` val at key `dest_keys[j] + delta`, for one signed axis
/// stride. Both key lists ascend, so a single monotone cursor resolves
/// every lookup in O(|src| + |dest|).
#[inline]
pub(crate) fn add_neighbor_vals(
    src_keys: &[u64],
    src_vals: &[f64],
    dest_keys: &[u64],
    out: &mut [f64],
    delta: u64,
) {
    let mut c = 0usize;
    for (j, &dk) in dest_keys.iter().enumerate() {
        let target = dk.wrapping_add(delta);
        while c < src_keys.len() && src_keys[c] < target {
            c += 1;
        }
        if c == src_keys.len() {
            return;
        }
        if src_keys[c] == target {
            out[j] += src_vals[c];
        }
    }
}

/// Fills `keys` with every parity-correct point of the radius-`budget`
/// L¹ ball, recursing over coordinates in order so the output is already
/// lexicographically (hence key-) sorted.
fn enumerate_ball(
    dim: usize,
    budget: i32,
    axis: usize,
    coords: &mut [i16; MAX_DIM],
    keys: &mut Vec<u64>,
) {
    if axis == dim - 1 {
        // Last axis: remaining budget with the parity of `budget`.
        let mut c = -budget;
        while c <= budget {
            coords[axis] = c as i16;
            keys.push(LatticePoint { coords: *coords }.key());
            c += 2;
        }
        return;
    }
    for c in -budget..=budget {
        coords[axis] = c as i16;
        enumerate_ball(dim, budget - c.abs(), axis + 1, coords, keys);
    }
    coords[axis] = 0;
}
