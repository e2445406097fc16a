//! Sum queries over a stored sample: per-item estimates, summed.

use rayon::prelude::*;
use serde::Serialize;

use coordest::estimators::ht_applicable;
use coordest::sampling::{SampleRecord, SampleSet};
use coordest::{estimate, EstimatorKind, FunctionSpec, Outcome, ThresholdScheme};

use crate::error::{CliError, Result};

#[derive(Clone, Debug)]
pub enum Aggregate {
    /// `Σ |max - min|^p` over the selected instances.
    LpP(f64),
    /// The p-th root of the `LpP` estimate.
    Lp(f64),
    /// `Σ max(0, v1 - v2)^p` on exactly two instances.
    LpPlus(f64),
    CustomSum(FunctionSpec),
}

impl Aggregate {
    fn name(&self) -> String {
        match self {
            Aggregate::LpP(p) => format!("L{p}^{p}"),
            Aggregate::Lp(p) => format!("L{p}"),
            Aggregate::LpPlus(p) => format!("L{p}+^{p}"),
            Aggregate::CustomSum(f) => format!("sum {f}"),
        }
    }

    fn item_function(&self) -> FunctionSpec {
        match self {
            Aggregate::LpP(p) | Aggregate::Lp(p) => FunctionSpec::RgP { p: *p },
            Aggregate::LpPlus(p) => FunctionSpec::RgPPlus { p: *p },
            Aggregate::CustomSum(f) => f.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KeyFilter {
    All,
    Prefix(String),
    /// Explicit keys, in output order. Keys absent from the sample count as
    /// all-zero items.
    Keys(Vec<String>),
}

#[derive(Clone, Debug)]
pub struct QuerySpec {
    pub aggregate: Aggregate,
    /// 1-based instance indices feeding the item function.
    pub instances: Vec<usize>,
    pub keys: KeyFilter,
}

impl QuerySpec {
    pub fn validate(&self, r: usize) -> Result<()> {
        if self.instances.is_empty() {
            return Err(CliError::Input("select at least one instance".into()));
        }
        if let Some(&i) = self.instances.iter().find(|&&i| i == 0 || i > r) {
            return Err(CliError::Input(format!("instance {i} does not exist (sample has {r})")));
        }
        if let Aggregate::LpP(p) | Aggregate::Lp(p) | Aggregate::LpPlus(p) = self.aggregate {
            if !(p.is_finite() && p > 0.0) {
                return Err(CliError::Input(format!("p must be positive, got {p}")));
            }
        }
        let f = self.aggregate.item_function();
        f.validate()?;
        f.check_arity(self.instances.len())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemFailure {
    pub key: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub query: String,
    pub estimator: String,
    pub estimate: f64,
    /// Items in the query domain.
    pub items: usize,
    /// Items with a positive estimate.
    pub contributing: usize,
    pub missing_keys: Vec<String>,
    pub failures: Vec<ItemFailure>,
    pub note: Option<String>,
}

fn project(rec: &SampleRecord, idx: &[usize]) -> Outcome {
    let e = rec.outcome.entries();
    Outcome::from_parts(rec.outcome.seed(), idx.iter().map(|&i| e[i]).collect())
}

/// Sums per-item estimates over the selected items. Items whose estimate
/// fails are listed and left out of the sum.
pub fn estimate_query(set: &SampleSet, query: &QuerySpec, kind: &EstimatorKind) -> Result<EstimateResult> {
    query.validate(set.r)?;
    let idx: Vec<usize> = query.instances.iter().map(|i| i - 1).collect();
    let scheme = ThresholdScheme::new(idx.iter().map(|&i| set.scheme.entries()[i].clone()).collect())?;
    let fspec = query.aggregate.item_function();

    let mut missing_keys = Vec::new();
    let selected: Vec<&SampleRecord> = match &query.keys {
        KeyFilter::All => set.records.iter().collect(),
        KeyFilter::Prefix(p) => set.records.iter().filter(|r| r.key.starts_with(p.as_str())).collect(),
        KeyFilter::Keys(keys) => keys
            .iter()
            .filter_map(|k| {
                let rec = set.get(k);
                if rec.is_none() {
                    missing_keys.push(k.clone());
                }
                rec
            })
            .collect(),
    };

    let per_item: Vec<std::result::Result<f64, String>> = selected
        .par_iter()
        .map(|rec| {
            let o = project(rec, &idx);
            if let EstimatorKind::HorvitzThompson = kind {
                // the all-zero completion is consistent; if it is never revealed, HT is undefined here
                ht_applicable(&fspec, &scheme, &o.representative()).map_err(|e| e.to_string())?;
            }
            estimate(kind, &fspec, &scheme, &o).map_err(|e| e.to_string())
        })
        .collect();

    let mut sum = 0.0;
    let mut contributing = 0;
    let mut failures = Vec::new();
    for (rec, x) in selected.iter().zip(per_item) {
        match x {
            Ok(x) => {
                sum += x;
                contributing += usize::from(x > 0.0);
            }
            Err(error) => failures.push(ItemFailure { key: rec.key.clone(), error }),
        }
    }
    let (estimate, note) = match query.aggregate {
        Aggregate::Lp(p) => (
            sum.powf(1.0 / p),
            Some(format!("p-th root of an unbiased L{p}^{p} estimate ({sum}); the root itself is biased")),
        ),
        _ => (sum, None),
    };
    Ok(EstimateResult {
        query: query.aggregate.name(),
        estimator: kind.name().to_string(),
        estimate,
        items: selected.len() + missing_keys.len(),
        contributing,
        missing_keys,
        failures,
        note,
    })
}
