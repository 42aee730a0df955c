//! File formats, run manifests and the command implementations behind the
//! `tickhawkes` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod stream;
pub mod study;

pub use error::{Error, Result};
