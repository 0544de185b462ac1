//! Deterministic benchmark model generators.
//!
//! Every generator is a pure function of its parameters: the same inputs
//! always produce byte-identical models.  Randomness inside
//! [`random`] models comes from an explicit seed driving a fixed
//! [`rng::SplitMix64`] sequence, never from global state.

pub mod escape;
pub mod hallway;
pub mod random;
pub mod rng;
pub mod rocksample;

use thiserror::Error;

/// Invalid generator parameters.
#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("{0}")]
    InvalidParams(String),
}

pub use escape::{gen_escape, EscapeParams};
pub use hallway::{gen_hallway, HallwayParams};
pub use random::{random_pomdp, RandomParams};
pub use rocksample::{gen_rocksample, RockSampleParams, RockType};
