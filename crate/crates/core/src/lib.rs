#![forbid(unsafe_code)]
//! Estimators for functions of coordinated samples.
//!
//! Every entry of a data vector is sampled with the same uniform seed `u`
//! against its own threshold function, so smaller seeds reveal more. From one
//! outcome the crate estimates `f(v)` without bias and without negative
//! values:
//!
//! - [`sampling`]: threshold schemes, outcomes, instance matrices, sample files.
//! - [`curve`] and [`hull`]: lower-bound curves, their convex hulls, and the
//!   v-optimal estimates they induce.
//! - [`range`]: the optimal range at a seed and existence checks.
//! - [`estimators`]: L*, U*, Horvitz-Thompson and order-optimal tables.
//! - [`verify`]: moments, competitive ratios and property grids.

pub mod curve;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod hull;
pub mod quad;
pub mod range;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{estimate, EstimatorKind};
pub use functions::{AbsLinearPower, CustomFunction, DiscreteDomain, FunctionSpec};
pub use sampling::{DataVector, EntryBound, EntryThreshold, InstanceMatrix, Outcome, Seed, ThresholdScheme};
