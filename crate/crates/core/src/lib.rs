//! Gaussian-process regression when both inputs and outputs are noisy and
//! the latent inputs obey a known monotonic ordering.
//!
//! The library infers the latent inputs through a log-gap transform that
//! makes the ordering constraint unconstrained, fits a nonparametric Gaussian
//! variational mixture over the transformed coordinates, and provides a
//! Metropolis–Hastings baseline plus a benchmark harness with synthetic
//! generators, metrics and CSV outputs.

pub mod deriv;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod mcmc;
mod numopt;
pub mod transform;
pub mod variational;

pub use error::{Error, Result};
