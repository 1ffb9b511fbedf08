//! Statistical methods for case-control genotype association studies.
//!
//! Predictors are ternary codes (`0` no mutation, `1` heterozygous, `2`
//! homozygous; external risk factors use the same three levels) and the
//! phenotype is a [`Label`]. Every method produces a [`metrics::Predictor`]
//! and is scored by the class-balanced K-fold error of
//! [`metrics::cv_error`]:
//!
//! - [`mdr`]: exhaustive multifactor dimensionality reduction, classic and
//!   independent-rule variants
//! - [`logicreg`]: logic regression over mod-3 polynomial trees searched by
//!   simulated annealing
//! - [`cart`] and [`ensemble`]: Gini classification trees, random forests,
//!   stochastic gradient boosting and conditional variable importance
//! - [`permtest`]: Monte Carlo permutation tests
//! - [`synth`]: planted-signal data generator
//!
//! The crate is `no_std` (with `alloc`) when built without the `std`
//! feature. The `parallel` feature evaluates independent work items on the
//! current rayon pool; results are always reduced in index order so output
//! does not depend on the worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cart;
pub mod dataset;
pub mod ensemble;
mod error;
mod linalg;
pub mod logicreg;
mod math;
pub mod mdr;
pub mod metrics;
pub mod par;
pub mod permtest;
pub mod rng;
pub mod synth;

pub use dataset::{Dataset, FoldPlan, Label, PredictorKind};
pub use error::{Error, Result};
pub use metrics::{CvError, Learner, Predictor};
