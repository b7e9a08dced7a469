//! Doubly robust estimation of average causal effects with double
//! cross-fitting, super-learner nuisance models, and a simulation harness
//! built around a statin/ASCVD data-generating mechanism.

pub mod cli;
pub mod config;
pub mod crossfit;
pub mod data;
pub mod dgm;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod math;
pub mod nuisance;
pub mod rng;
pub mod simharness;
pub mod superlearner;

pub use error::{Error, Result};
