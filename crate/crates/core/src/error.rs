use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::{Direction, Violation};

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid Hawkes parameters: {}", ViolationList(.0))]
    InvalidParams(Vec<Violation>),

    #[error("event {index} at time {time} does not come strictly after its predecessor")]
    UnorderedEvents { index: usize, time: f64 },

    #[error("event {index} has an invalid time {time}")]
    InvalidEventTime { index: usize, time: f64 },

    #[error("event {index} has mark 0; marks must be at least 1")]
    ZeroMark { index: usize },

    #[error("horizon {horizon} is shorter than the last event time {last}")]
    HorizonTooShort { horizon: f64, last: f64 },

    #[error("need at least {needed} events, got {got}")]
    NotEnoughEvents { needed: usize, got: usize },

    #[error("no {0:?} events to estimate mark moments from")]
    MissingDirection(Direction),

    #[error("invalid mark moments: {0}")]
    InvalidMoments(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-positive price {price} at index {index}")]
    NonPositivePrice { index: usize, price: f64 },

    #[error("variance radicand is negative ({0})")]
    NegativeRadicand(f64),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("parameter sampler failed to produce valid parameters after {0} attempts")]
    SamplerExhausted(usize),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
