//! Noise-tolerant gradient projection for bound-constrained problems.
//!
//! The crate provides projected-gradient solvers with a relaxed Armijo line
//! search and its self-calibrated variant, estimators of the noise level and
//! noise bound of a black-box objective, noise-aware finite-difference
//! gradients, sample-average objectives with batch pinning, and checks of
//! solver traces against the neighborhood convergence guarantee.

pub mod diagnostics;
pub mod error;
pub mod finite_difference;
pub mod geometry;
pub mod harness;
pub mod noise;
pub mod solvers;
pub mod stochastic;

pub use error::{Error, Result};
pub use geometry::{BoxRegion, ConvexRegion, SearchDirection};
pub use noise::{NoiseEstimate, NoiseMethod};
pub use solvers::{IterationRecord, SolverConfig, SolverMode};
pub use stochastic::{NoisyOracle, ProblemSpec};
