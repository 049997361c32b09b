//! Graph matching and community recovery for correlated two-community
//! stochastic block models.
//!
//! The pipeline: generate a correlated pair of SBMs ([`model`]), enumerate
//! rooted trees and assemble chandelier families ([`treegen`], [`chandelier`]),
//! compute signed chandelier-count similarity scores by color-coding dynamic
//! programming ([`counting`]), threshold the scores into a partial matching and
//! boost it to a full one by seeded common-neighbor growth ([`matching`]), and
//! recover community labels on single graphs or on the matched union graph
//! ([`community`]). Brute-force reference implementations live in [`oracle`];
//! experiment sweeps and CSV emission in [`harness`].
//!
//! All randomness flows through seeded ChaCha streams; every operation is
//! deterministic given its seed.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};
use thiserror::Error;

pub mod chandelier;
pub mod community;
pub mod counting;
pub mod harness;
pub mod matching;
pub mod model;
pub mod oracle;
pub mod treegen;

/// Default scalar type for the whole pipeline.
pub type Real = f64;

/// Floating-point scalar the numeric kernels are generic over.
///
/// Blanket-implemented for `f32` and `f64` (and anything else satisfying the
/// bounds). Tolerance-sensitive contracts (root finding to 1e−12, score
/// accumulation) are stated for [`Real`].
pub trait Scalar:
    Float + NumAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self {
        NumCast::from(x).expect("f64 conversion")
    }

    fn from_usize(x: usize) -> Self {
        NumCast::from(x).expect("usize conversion")
    }

    fn to_f64(self) -> f64 {
        NumCast::from(self).expect("f64 conversion")
    }
}

impl<T> Scalar for T where
    T: Float + NumAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

/// Errors surfaced by the library.
///
/// [`Error::Capacity`] marks guard violations (problem too large for the
/// implemented budget) and maps to CLI exit code 3; every other variant is a
/// validation or I/O failure and maps to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("capacity guard exceeded: {0}")]
    Capacity(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

/// Neumaier compensated accumulator; used wherever scores are summed.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator<T: Scalar> {
    sum: T,
    compensation: T,
}

impl<T: Scalar> Default for Accumulator<T> {
    fn default() -> Self {
        Self { sum: T::zero(), compensation: T::zero() }
    }
}

impl<T: Scalar> Accumulator<T> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}
