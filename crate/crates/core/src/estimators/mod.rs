//! Estimators of `f(v)` from a single outcome.

mod ht;
mod lstar;
pub mod order_optimal;
mod ustar;

use std::sync::Arc;

pub use ht::{ht_applicable, ht_estimate, reveal_probability};
pub use lstar::{lstar_closed, lstar_estimate, lstar_quadrature, LstarPath};
pub use order_optimal::{order_optimal_build, order_optimal_estimate, EstimatorTable, OrderSpec, Scalar};
pub use ustar::{ustar_closed, ustar_estimate, ustar_path, ustar_sweep, Mark, UstarPath};

use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::hull::v_optimal;
use crate::sampling::{DataVector, Outcome, ThresholdScheme};

#[derive(Clone, Debug)]
pub enum EstimatorKind {
    Lstar,
    Ustar,
    HorvitzThompson,
    /// The v-optimal estimates for a known `v`; a benchmark, not an estimator.
    VOptOracle(DataVector),
    OrderOptimal(Arc<EstimatorTable<f64>>),
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Lstar => "lstar",
            EstimatorKind::Ustar => "ustar",
            EstimatorKind::HorvitzThompson => "ht",
            EstimatorKind::VOptOracle(_) => "vopt",
            EstimatorKind::OrderOptimal(_) => "table",
        }
    }
}

pub fn estimate(kind: &EstimatorKind, fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Result<f64> {
    match kind {
        EstimatorKind::Lstar => lstar_estimate(fspec, scheme, outcome),
        EstimatorKind::Ustar => ustar_estimate(fspec, scheme, outcome),
        EstimatorKind::HorvitzThompson => ht_estimate(fspec, scheme, outcome),
        EstimatorKind::VOptOracle(v) => {
            if !outcome.is_consistent_with(v.entries()) {
                return Err(Error::InvalidValue("outcome is not consistent with the oracle vector".into()));
            }
            Ok(v_optimal(fspec, scheme, v)?.rate(outcome.rho()).unwrap_or(0.0))
        }
        EstimatorKind::OrderOptimal(table) => order_optimal_estimate(table, outcome),
    }
}
