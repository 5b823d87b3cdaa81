//! Error type shared by all numeric modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors emitted by tensor operations, layers, models and training.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Two operands have incompatible shapes; names both.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A single tensor has a shape the operation cannot accept.
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    /// Flat data length does not match the product of the extents.
    DataLength { expected: usize, got: usize },
    /// Head count does not divide the channel count.
    HeadsMismatch { heads: usize, channels: usize },
    /// Sequence too short to survive the discriminator's pooling stages.
    TimeTooShort { got: usize, min: usize },
    /// A backward pass received a cache or gradient from a different call.
    CacheMismatch { op: &'static str },
    /// Invalid configuration value.
    Config { reason: String },
    /// A computation produced a non-finite value.
    NonFinite { op: &'static str },
    /// Training loss became NaN/Inf at the given step.
    Diverged { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left:?} and {right:?}")
            }
            Error::InvalidShape { op, shape, reason } => {
                write!(f, "{op}: invalid shape {shape:?}: {reason}")
            }
            Error::DataLength { expected, got } => {
                write!(f, "data length mismatch: expected {expected}, got {got}")
            }
            Error::HeadsMismatch { heads, channels } => {
                write!(
                    f,
                    "head count {heads} must divide channel count {channels}"
                )
            }
            Error::TimeTooShort { got, min } => {
                write!(f, "sequence length {got} too short; minimum is {min}")
            }
            Error::CacheMismatch { op } => {
                write!(f, "{op}: cache does not match this forward call")
            }
            Error::Config { reason } => write!(f, "invalid configuration: {reason}"),
            Error::NonFinite { op } => write!(f, "{op}: non-finite value encountered"),
            Error::Diverged { step } => write!(f, "training diverged at step {step}"),
        }
    }
}

impl core::error::Error for Error {}
