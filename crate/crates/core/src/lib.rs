//! Estimation of a symmetric bivariate marked Hawkes model of tick-level
//! price moves.
//!
//! Up and down price moves are modelled as two mutually exciting point
//! processes with a shared baseline `mu`, self-excitation `alpha1`,
//! cross-excitation `alpha2` and exponential decay `beta`. The crate
//! provides:
//!
//! - [`model`]: parameter and event types, intensity evaluation, stationarity checks;
//! - [`simulate`]: exact thinning simulation and labelled training-set generation;
//! - [`mle`]: O(N) log-likelihood, analytic gradient and quasi-Newton fitting;
//! - [`volatility`]: closed-form Hawkes volatility and the realized-volatility benchmark;
//! - [`nn`]: a from-scratch two-layer LSTM estimator with a constrained output head;
//! - [`ingest`]: fixed-interval mid-price filtering of quote streams and windowing.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, the CLI and thread-level parallelism live in the
//! `tickhawkes` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(rustdoc::broken_intra_doc_links)]

extern crate alloc;

pub mod error;
pub mod ingest;
pub mod linalg;
pub mod math;
pub mod mle;
pub mod model;
pub mod nn;
pub mod optim;
pub mod simulate;
pub mod volatility;

mod clock;

pub use error::{Error, Result};
pub use model::{
    branching_ratio, intensity_at, validate, Direction, EventSequence, HawkesParams,
    IntensityState, MarkMoments, MarkedEvent, Violation,
};
