//! Monte Carlo error of sum estimates as the number of items grows.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind};
use crate::functions::FunctionSpec;
use crate::sampling::{sample_matrix, InstanceMatrix, ThresholdScheme};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    /// Number of leading items summed.
    pub items: usize,
    pub truth: f64,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    /// Root mean squared error over the truth.
    pub relative_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateReport {
    pub trials: usize,
    pub rows: Vec<AggregateRow>,
}

impl AggregateReport {
    pub fn row(&self, items: usize) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.items == items)
    }

    /// Relative RMSE at `small` items over that at `large` items.
    pub fn rmse_ratio(&self, small: usize, large: usize) -> Option<f64> {
        Some(self.row(small)?.relative_rmse / self.row(large)?.relative_rmse)
    }

    /// Every step from `d` to `4d` items divides the relative RMSE by about 2.
    pub fn scales_as_inverse_sqrt(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| {
            self.row(4 * r.items)
                .map_or(true, |q| ((r.relative_rmse / q.relative_rmse) / 2.0 - 1.0).abs() <= slack)
        })
    }
}

/// Sums the estimates over the first `d` items for each `d` in `sizes`, over
/// `trials` salts `"{salt_prefix}{t}"`.
pub fn aggregate_error_experiment(
    matrix: &InstanceMatrix,
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    kind: &EstimatorKind,
    sizes: &[usize],
    trials: usize,
    salt_prefix: &str,
) -> Result<AggregateReport> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max > matrix.len() {
        return Err(Error::InvalidValue(format!("{max} items requested, matrix has {}", matrix.len())));
    }
    let truth_prefix = prefix_sums(
        &matrix.rows()[..max].iter().map(|v| fspec.value(v.entries())).collect::<Result<Vec<f64>>>()?,
    );
    let sub = InstanceMatrix::new(matrix.arity(), matrix.keys()[..max].to_vec(), matrix.rows()[..max].iter().map(|v| v.entries().to_vec()).collect())?;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let set = sample_matrix(&sub, scheme, &format!("{salt_prefix}{t}"))?;
            let est = set
                .records
                .iter()
                .map(|r| estimate(kind, fspec, scheme, &r.outcome))
                .collect::<Result<Vec<f64>>>()?;
            Ok(prefix_sums(&est))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &d in sizes {
        let truth = truth_prefix[d];
        let sums: Vec<f64> = per_trial.iter().map(|p| p[d]).collect();
        let n = sums.len() as f64;
        let mean = sums.iter().sum::<f64>() / n;
        let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let mse = sums.iter().map(|s| (s - truth).powi(2)).sum::<f64>() / n;
        let relative_rmse = if truth > 0.0 { mse.sqrt() / truth } else { mse.sqrt() };
        rows.push(AggregateRow { items: d, truth, mean, std_error: (var / n).sqrt(), relative_rmse });
    }
    Ok(AggregateReport { trials, rows })
}

fn prefix_sums(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}
