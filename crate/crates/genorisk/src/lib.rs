//! Batch front end for `genorisk-core`.
//!
//! A TOML run config names a dataset (CSV) or a synthetic design, one
//! method and its parameters; [`run::run`] evaluates it and returns an
//! [`report::EvalReport`] that serializes to JSON.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use report::EvalReport;
