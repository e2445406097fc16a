//! Reading datasets, finite domains and priority orders from text.

use std::io::Read;

use coordest::sampling::seed_from_key;
use coordest::InstanceMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{CliError, Result};

/// Reads a wide CSV: a header `key,<instance>,...`, then one row per item.
/// Empty or missing cells are zero.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<InstanceMatrix> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let r = rdr.headers()?.len().saturating_sub(1);
    if r == 0 {
        return Err(CliError::Input("header needs a key column and at least one instance".into()));
    }
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let line = n + 2;
        if record.len() > r + 1 {
            return Err(CliError::Input(format!("line {line}: {} cells, header has {}", record.len(), r + 1)));
        }
        let key = record.get(0).unwrap_or("").to_string();
        if key.is_empty() {
            return Err(CliError::Input(format!("line {line}: empty key")));
        }
        let mut row = vec![0.0; r];
        for (i, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                continue;
            }
            let x: f64 = cell
                .parse()
                .map_err(|_| CliError::Input(format!("line {line}: `{cell}` is not a number")))?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(CliError::Input(format!("line {line}: values must be finite and nonnegative, got {x}")));
            }
            row[i] = x;
        }
        keys.push(key);
        rows.push(row);
    }
    Ok(InstanceMatrix::new(r, keys, rows)?)
}

/// Parses `a/b`, an integer, or a plain decimal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || CliError::Input(format!("`{s}` is not a number"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d == BigInt::from(0) {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) || (int.is_empty() && frac.is_empty()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    Ok(BigRational::new(n, BigInt::from(10).pow(frac.len() as u32)))
}

pub fn parse_rational_list(s: &str) -> Result<Vec<BigRational>> {
    s.split(',').map(parse_rational).collect()
}

/// One domain vector per non-empty line, entries separated by commas.
pub fn read_domain(text: &str) -> Result<Vec<Vec<BigRational>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_rational_list(l.trim_start_matches('(').trim_end_matches(')')))
        .collect()
}

/// One chain per line, earliest first: `(3,1) < (3,2) < (3,0)`. Returns
/// chains of domain indices.
pub fn read_order(text: &str, domain: &[Vec<BigRational>]) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            line.split('<')
                .map(|item| {
                    let v = parse_rational_list(item.trim().trim_start_matches('(').trim_end_matches(')'))?;
                    domain
                        .iter()
                        .position(|d| *d == v)
                        .ok_or_else(|| CliError::Input(format!("{} is not in the domain", item.trim())))
                })
                .collect()
        })
        .collect()
}

/// Deterministic two-instance dataset with mostly small changes between
/// instances and a few items appearing or vanishing.
pub fn synthetic_matrix(n: usize, salt: &str) -> Result<InstanceMatrix> {
    let keys: Vec<String> = (0..n).map(|i| format!("item{i}")).collect();
    let rows = keys
        .iter()
        .map(|k| {
            let h = |tag: &str| seed_from_key(k.as_bytes(), format!("{salt}/{tag}").as_bytes()).value();
            let base = h("base").powi(2);
            match h("kind") {
                x if x < 0.1 => vec![base, 0.0],
                x if x < 0.2 => vec![0.0, h("new")],
                _ => vec![base, base * (0.75 + 0.5 * h("shift"))],
            }
        })
        .collect();
    Ok(InstanceMatrix::new(2, keys, rows)?)
}
