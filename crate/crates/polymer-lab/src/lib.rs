// Validation guards are written `!(x > y)` on purpose: the negation
// fails NaN too, which `x <= y` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! A simulation and verification lab for lattice polymer partition functions
//! and non-negative martingales with product structure.
//!
//! The crate computes partition-function martingales exactly by sparse
//! dynamic programming over the space-time lattice, estimates their moments
//! and running-supremum tails by reproducible Monte Carlo, and turns tail
//! bounds into explicit moment certificates via a bootstrap inequality.
//!
//! Module map:
//!
//! * [`rng`]: counter-based RNG streams; identical results at any worker
//!   count or replicate order.
//! * [`accum`]: exact f64 accumulation and mergeable running moments.
//! * [`disorder`]: site disorder laws, exact cumulant generating function,
//!   almost-sure one-step ratio bounds, reproducible sampling.
//! * [`lattice`]: lattice points, parity cones, packed-key enumeration.
//! * [`polymer`]: the partition-function DP, normalized martingale paths,
//!   endpoint measures, space-time shifts, and a brute-force path oracle.
//! * [`replica`]: exact second moments via the two-walk collision
//!   representation and the collision-based critical-coupling estimate.
//! * [`branching`]: Galton-Watson and branching-random-walk reference
//!   martingales with closed-form small-case moments.
//! * [`stats`]: generic Monte Carlo estimation over any path sampler,
//!   domination tests, tail estimates, and moment certificates.
//! * [`records`], [`config`], [`runner`]: experiment configuration, file
//!   outputs, and the CLI experiment runner.

pub mod accum;
pub mod branching;
pub mod config;
pub mod disorder;
pub mod lattice;
pub mod polymer;
pub mod records;
pub mod replica;
pub mod rng;
pub mod runner;
pub mod stats;

mod error;

pub use error::{Error, Result};
