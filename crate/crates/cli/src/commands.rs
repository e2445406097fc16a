//! The subcommands, minus argument parsing and printing.

use std::io::{BufRead, Read, Write};

use num_rational::BigRational;

use coordest::estimators::{order_optimal_build, EstimatorTable, OrderSpec};
use coordest::sampling::{read_sample_file, sample_matrix, sample_matrix_with_seeds, write_sample_file, SampleSet};
use coordest::verify::{aggregate_error_experiment, property_suite, tightness_family, AggregateReport, SuiteConfig, SuiteReport, TightnessReport};
use coordest::{EstimatorKind, FunctionSpec, InstanceMatrix, Seed, ThresholdScheme};

use crate::error::{CliError, Result};
use crate::ingest::{read_domain, read_matrix_csv, read_order};
use crate::query::{estimate_query, EstimateResult, QuerySpec};

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeSpec {
    /// One rate for every instance, or one per instance.
    Pps(Vec<f64>),
    /// The same step thresholds on every instance.
    Step { breakpoints: Vec<f64>, levels: Vec<f64> },
}

impl SchemeSpec {
    pub fn build(&self, r: usize) -> Result<ThresholdScheme> {
        Ok(match self {
            SchemeSpec::Pps(rates) if rates.len() == 1 => ThresholdScheme::pps(&vec![rates[0]; r])?,
            SchemeSpec::Pps(rates) if rates.len() == r => ThresholdScheme::pps(rates)?,
            SchemeSpec::Pps(rates) => {
                return Err(CliError::Input(format!("{} rates for {r} instances", rates.len())));
            }
            SchemeSpec::Step { breakpoints, levels } => ThresholdScheme::step(r, breakpoints, levels)?,
        })
    }
}

/// Samples a CSV dataset and writes the sample file. `seeds`, when given,
/// replace the hashed seeds item by item.
pub fn cmd_sample<R: Read, W: Write>(
    input: R,
    scheme: &SchemeSpec,
    salt: &str,
    seeds: Option<&[f64]>,
    out: W,
) -> Result<SampleSet> {
    let matrix = read_matrix_csv(input)?;
    let set = sample_dataset(&matrix, scheme, salt, seeds)?;
    write_sample_file(&set, out)?;
    Ok(set)
}

pub fn sample_dataset(matrix: &InstanceMatrix, scheme: &SchemeSpec, salt: &str, seeds: Option<&[f64]>) -> Result<SampleSet> {
    let scheme = scheme.build(matrix.arity())?;
    Ok(match seeds {
        None => sample_matrix(matrix, &scheme, salt)?,
        Some(seeds) => {
            let seeds = seeds.iter().map(|&u| Seed::new(u)).collect::<coordest::Result<Vec<_>>>()?;
            sample_matrix_with_seeds(matrix, &scheme, salt, &seeds)?
        }
    })
}

pub fn parse_estimator(name: &str) -> Result<EstimatorKind> {
    match name {
        "lstar" | "l*" => Ok(EstimatorKind::Lstar),
        "ustar" | "u*" => Ok(EstimatorKind::Ustar),
        "ht" => Ok(EstimatorKind::HorvitzThompson),
        _ => Err(CliError::Input(format!("unknown estimator `{name}` (lstar, ustar, ht)"))),
    }
}

pub fn cmd_estimate<R: BufRead>(sample: R, query: &QuerySpec, kind: &EstimatorKind) -> Result<EstimateResult> {
    let set = read_sample_file(sample)?;
    estimate_query(&set, query, kind)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrderChoice {
    LowerFirst,
    HigherFirst,
    /// Text of an order file, one chain per line.
    Chains(String),
}

pub fn cmd_derive(
    fspec: &FunctionSpec,
    domain_text: &str,
    breakpoints: Vec<BigRational>,
    levels: Vec<BigRational>,
    order: &OrderChoice,
) -> Result<EstimatorTable<BigRational>> {
    let domain = read_domain(domain_text)?;
    let order = match order {
        OrderChoice::LowerFirst => OrderSpec::LowerFirst,
        OrderChoice::HigherFirst => OrderSpec::HigherFirst,
        OrderChoice::Chains(text) => OrderSpec::Chains(read_order(text, &domain)?),
    };
    Ok(order_optimal_build(fspec, domain, breakpoints, levels, order)?)
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub fspec: FunctionSpec,
    pub grid: usize,
    pub rates: Option<Vec<f64>>,
    pub seeds: usize,
    pub check_ustar: bool,
    pub check_ht: bool,
}

pub fn cmd_verify(opts: &VerifyOptions) -> Result<SuiteReport> {
    if opts.grid < 2 || opts.seeds == 0 {
        return Err(CliError::Input("need a grid of at least 2 and at least one seed".into()));
    }
    let mut cfg = SuiteConfig::square_grid(opts.fspec.clone(), opts.grid);
    if let Some(rates) = &opts.rates {
        cfg.scheme = SchemeSpec::Pps(rates.clone()).build(2)?;
    }
    cfg.seeds = (1..=opts.seeds).map(|i| i as f64 / opts.seeds as f64).collect();
    cfg.check_ustar = opts.check_ustar;
    cfg.check_ht = opts.check_ht;
    Ok(property_suite(&cfg))
}

pub fn cmd_bench_tight(p: f64) -> Result<TightnessReport> {
    if !(0.0..0.5).contains(&p) {
        return Err(CliError::Input(format!("the tight family needs 0 <= p < 0.5, got {p}")));
    }
    Ok(tightness_family(p)?)
}

pub fn cmd_bench_aggregate(
    matrix: &InstanceMatrix,
    fspec: &FunctionSpec,
    kind: &EstimatorKind,
    sizes: &[usize],
    trials: usize,
    salt: &str,
) -> Result<AggregateReport> {
    if trials < 2 {
        return Err(CliError::Input("need at least two trials".into()));
    }
    let scheme = ThresholdScheme::unit_pps(matrix.arity());
    Ok(aggregate_error_experiment(matrix, fspec, &scheme, kind, sizes, trials, salt)?)
}

/// Four decimals with trailing zeros dropped: `2`, `5.3333`.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimals() {
        assert_eq!(fmt4(2.0), "2");
        assert_eq!(fmt4(16.0 / 3.0), "5.3333");
        assert_eq!(fmt4(8.0 / 3.0), "2.6667");
        assert_eq!(fmt4(0.5), "0.5");
        assert_eq!(fmt4(-1e-9), "0");
    }

    #[test]
    fn rates_broadcast() {
        assert_eq!(SchemeSpec::Pps(vec![2.0]).build(3).unwrap(), ThresholdScheme::pps(&[2.0; 3]).unwrap());
        assert!(SchemeSpec::Pps(vec![1.0, 2.0]).build(3).is_err());
        assert!(SchemeSpec::Pps(vec![0.0]).build(1).is_err());
    }
}
