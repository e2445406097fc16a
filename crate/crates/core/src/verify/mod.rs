//! Numerical checks of estimator properties and competitiveness.

mod aggregate;
mod moments;
mod suite;

pub use aggregate::{aggregate_error_experiment, AggregateReport, AggregateRow};
pub use moments::{
    competitive_ratio, is_estimable, moments, tightness_family, MomentReport, RatioReport, TightnessReport, TAIL_EPS,
};
pub use suite::{property_suite, Check, SuiteConfig, SuiteReport, Tolerances, Violation};
