//! Monte Carlo laboratory for generalized excited (cookie) random walks on
//! the integer lattice.
//!
//! The crate is organised bottom-up:
//!
//! * [`rng`]: counter-based, splittable random streams (one per replica).
//! * [`model`]: step kernels and the structural conditions they must meet
//!   (bounded jumps, drift on first visits, ellipticity).
//! * [`environment`]: i.i.d. random environments sampled lazily by hashing.
//! * [`trajectory`]: the streaming simulation engine.
//! * [`renewal`]: online detection of regeneration times, plus a literal
//!   brute-force oracle.
//! * [`estimators`]: speed, covariance, tails, range, local times and the
//!   other theory checks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environment;
pub mod estimators;
pub mod model;
pub mod renewal;
pub mod rng;
pub mod trajectory;

pub use environment::{EnvironmentError, EnvironmentModel, SiteBias};
pub use model::{
    CookieSet, Direction, KernelKind, KernelSpec, ModelError, StepDistribution, WalkContext,
};
pub use renewal::{RegenerationSequence, RenewalDetector};
pub use rng::RngStream;
pub use trajectory::{simulate, SimOptions, TrajectoryStats};

/// Largest lattice dimension supported by the simulation engine.
pub const MAX_DIM: usize = 8;

/// A lattice point. Only the first `d` coordinates are meaningful; the rest
/// stay zero.
pub type Site = [i32; MAX_DIM];
