//! Streamlined mean-field variational Bayes for two- and three-level Gaussian
//! linear mixed models with global-local shrinkage priors on a subset of the
//! fixed effects, signal-adaptive variable selection, and a conjugate Gibbs
//! sampler used as a reference.

pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod linalg;
pub mod mfvb;
pub mod savs;
pub mod summary;

pub use error::{Error, Result};
