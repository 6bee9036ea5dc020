//! Analysis and optimization of saturation designs on clustered interference
//! graphs.
//!
//! The crate computes exact and asymptotic bias/variance/MSE of the
//! difference-in-means and stratified estimators under randomized and
//! deterministic saturation designs, optimizes the treatment-proportion
//! vector under those objectives, and validates every closed form against
//! brute-force enumeration.

pub mod analytics;
pub mod config;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod montecarlo;
pub mod optimize;
pub mod outcomes;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
