//! Few-step stochastic samplers for variance-preserving diffusion models,
//! trained as conditional mean flows over the reverse-SDE transition kernel,
//! plus the exact optimal-transport tooling used to verify their Wasserstein
//! convergence behaviour on synthetic low-dimensional data.

pub mod data;
pub mod error;
pub mod model;
pub mod network;
pub mod schedule;

pub use error::{Error, Result};
