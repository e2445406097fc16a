//! Batch front end over coordinated samples: ingest a CSV of instances,
//! sample it, answer sum queries from the stored sample, derive estimator
//! tables and run the verification grids.

pub mod commands;
pub mod error;
pub mod ingest;
pub mod query;

pub use error::{CliError, Result};
pub use query::{Aggregate, EstimateResult, ItemFailure, KeyFilter, QuerySpec};
