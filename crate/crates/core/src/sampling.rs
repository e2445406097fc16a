//! Coordinated (shared-seed) threshold sampling.
//!
//! Entry `i` of a vector is included in the sample at seed `u` iff
//! `v_i >= tau_i(u)`. Unsampled entries carry the strict bound `v_i < tau_i(u)`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use crate::error::{Error, Result};

/// Nonnegative weights of one item across `r` instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DataVector(Vec<f64>);

impl DataVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidValue("data vector needs at least one entry".into()));
        }
        if let Some(bad) = entries.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidValue(format!("entry {bad} is not a finite nonnegative real")));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for DataVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DataVector> for Vec<f64> {
    fn from(v: DataVector) -> Self {
        v.0
    }
}

/// A seed in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Seed(f64);

impl Seed {
    pub fn new(u: f64) -> Result<Self> {
        if u > 0.0 && u <= 1.0 {
            Ok(Self(u))
        } else {
            Err(Error::InvalidValue(format!("seed {u} is outside (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Seed {
    type Error = Error;
    fn try_from(u: f64) -> Result<Self> {
        Self::new(u)
    }
}

impl From<Seed> for f64 {
    fn from(s: Seed) -> f64 {
        s.0
    }
}

/// Hashes `key` under `salt` to a seed. The salt is hashed first and used as
/// the seed of the key hash, so `("ab","c")` and `("a","bc")` differ.
pub fn seed_from_key(key: &[u8], salt: &[u8]) -> Seed {
    let h = xxh3_64_with_seed(key, xxh3_64(salt));
    Seed(((h as f64) + 1.0) / 18_446_744_073_709_551_616.0)
}

/// Threshold function of a single entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryThreshold {
    /// `tau(u) = u * rate`.
    Pps { rate: f64 },
    /// Value `levels[k]` is sampled iff `u <= breakpoints[k]`. Above the last
    /// breakpoint nothing is sampled.
    Step { breakpoints: Vec<f64>, levels: Vec<f64> },
}

impl EntryThreshold {
    fn validate(&self) -> Result<()> {
        match self {
            EntryThreshold::Pps { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::InvalidScheme(format!("PPS rate must be positive, got {rate}")));
                }
            }
            EntryThreshold::Step { breakpoints, levels } => {
                if breakpoints.is_empty() || breakpoints.len() != levels.len() {
                    return Err(Error::InvalidScheme(
                        "step scheme needs one level per breakpoint".into(),
                    ));
                }
                let increasing = |xs: &[f64]| xs.windows(2).all(|w| w[0] < w[1]);
                if !increasing(breakpoints) || !increasing(levels) {
                    return Err(Error::InvalidScheme(
                        "step breakpoints and levels must be strictly increasing".into(),
                    ));
                }
                if breakpoints[0] <= 0.0 || *breakpoints.last().unwrap() > 1.0 || levels[0] <= 0.0 {
                    return Err(Error::InvalidScheme(
                        "step breakpoints must lie in (0,1] and levels must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Cut level at seed `u`: a value is sampled iff it is at least this.
    pub fn at(&self, u: f64) -> f64 {
        match self {
            EntryThreshold::Pps { rate } => u * rate,
            EntryThreshold::Step { breakpoints, levels } => breakpoints
                .iter()
                .position(|&b| u <= b)
                .map_or(f64::INFINITY, |k| levels[k]),
        }
    }

    /// Largest seed at which `value` is still sampled (0 if never).
    pub fn crossing_seed(&self, value: f64) -> f64 {
        match self {
            EntryThreshold::Pps { rate } => value / rate,
            EntryThreshold::Step { breakpoints, levels } => levels
                .iter()
                .rposition(|&l| l <= value)
                .map_or(0.0, |k| breakpoints[k]),
        }
    }

    /// Seeds in (0,1) where the cut level jumps.
    fn jump_seeds(&self) -> Vec<f64> {
        match self {
            EntryThreshold::Pps { .. } => Vec::new(),
            EntryThreshold::Step { breakpoints, .. } => {
                breakpoints.iter().copied().filter(|&b| b < 1.0).collect()
            }
        }
    }
}

/// Per-entry threshold functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScheme {
    entries: Vec<EntryThreshold>,
}

impl ThresholdScheme {
    pub fn new(entries: Vec<EntryThreshold>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidScheme("scheme needs at least one entry".into()));
        }
        for e in &entries {
            e.validate()?;
        }
        Ok(Self { entries })
    }

    pub fn pps(rates: &[f64]) -> Result<Self> {
        Self::new(rates.iter().map(|&rate| EntryThreshold::Pps { rate }).collect())
    }

    /// PPS with `tau*_i = 1` for every entry.
    pub fn unit_pps(r: usize) -> Self {
        Self::pps(&vec![1.0; r]).expect("unit rates are valid")
    }

    /// The same step thresholds on every entry.
    pub fn step(r: usize, breakpoints: &[f64], levels: &[f64]) -> Result<Self> {
        let e = EntryThreshold::Step {
            breakpoints: breakpoints.to_vec(),
            levels: levels.to_vec(),
        };
        Self::new(vec![e; r])
    }

    pub fn arity(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize) -> Result<&EntryThreshold> {
        self.entries.get(i).ok_or(Error::IndexOutOfRange { index: i, arity: self.arity() })
    }

    pub fn entries(&self) -> &[EntryThreshold] {
        &self.entries
    }

    /// True when every entry is PPS with rate 1.
    pub fn is_unit_pps(&self) -> bool {
        self.entries.iter().all(|e| matches!(e, EntryThreshold::Pps { rate } if *rate == 1.0))
    }

    pub fn is_pps(&self) -> bool {
        self.entries.iter().all(|e| matches!(e, EntryThreshold::Pps { .. }))
    }

    pub fn pps_rate(&self, i: usize) -> Option<f64> {
        match self.entries.get(i)? {
            EntryThreshold::Pps { rate } => Some(*rate),
            EntryThreshold::Step { .. } => None,
        }
    }

    /// Sorted seeds in (0,1) where the outcome of `v` can change.
    pub fn breakpoints(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (e, &x) in self.entries.iter().zip(v) {
            out.push(e.crossing_seed(x));
            out.extend(e.jump_seeds());
        }
        out.retain(|&b| b > 0.0 && b < 1.0);
        sort_dedup(&mut out);
        out
    }
}

pub(crate) fn sort_dedup(xs: &mut Vec<f64>) {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    xs.dedup();
}

/// `tau_i(u)`.
pub fn threshold(scheme: &ThresholdScheme, i: usize, u: Seed) -> Result<f64> {
    Ok(scheme.entry(i)?.at(u.value()))
}

/// What an outcome reveals about one entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EntryBound {
    Exact(f64),
    /// The entry lies in `[0, bound)`.
    Below(f64),
}

impl EntryBound {
    pub fn contains(self, x: f64) -> bool {
        match self {
            EntryBound::Exact(v) => x == v,
            EntryBound::Below(b) => x >= 0.0 && x < b,
        }
    }

    pub fn exact(self) -> Option<f64> {
        match self {
            EntryBound::Exact(v) => Some(v),
            EntryBound::Below(_) => None,
        }
    }
}

/// The sample of one vector at seed `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    rho: Seed,
    entries: Vec<EntryBound>,
}

impl Outcome {
    /// Builds an outcome from explicit observations. No consistency check
    /// against a scheme is possible here; see [`Outcome::validate`].
    pub fn from_parts(rho: Seed, entries: Vec<EntryBound>) -> Self {
        Self { rho, entries }
    }

    pub fn rho(&self) -> f64 {
        self.rho.value()
    }

    pub fn seed(&self) -> Seed {
        self.rho
    }

    pub fn arity(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[EntryBound] {
        &self.entries
    }

    pub fn sampled(&self) -> BTreeMap<usize, f64> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.exact().map(|x| (i, x)))
            .collect()
    }

    pub fn bounds(&self) -> BTreeMap<usize, f64> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                EntryBound::Below(b) => Some((i, *b)),
                EntryBound::Exact(_) => None,
            })
            .collect()
    }

    pub fn is_fully_sampled(&self) -> bool {
        self.entries.iter().all(|e| e.exact().is_some())
    }

    pub fn is_consistent_with(&self, v: &[f64]) -> bool {
        v.len() == self.entries.len() && self.entries.iter().zip(v).all(|(e, &x)| e.contains(x))
    }

    /// Checks the outcome against the scheme that supposedly produced it.
    pub fn validate(&self, scheme: &ThresholdScheme) -> Result<()> {
        if scheme.arity() != self.arity() {
            return Err(Error::ArityMismatch { expected: scheme.arity(), got: self.arity() });
        }
        for (i, e) in self.entries.iter().enumerate() {
            let t = scheme.entry(i)?.at(self.rho());
            let ok = match *e {
                EntryBound::Exact(x) => x >= t,
                EntryBound::Below(b) => b == t,
            };
            if !ok {
                return Err(Error::InvalidValue(format!("entry {} inconsistent with threshold {t}", i + 1)));
            }
        }
        Ok(())
    }

    /// The vector with every unsampled entry set to 0. It is consistent with
    /// the outcome and has the same outcome at every seed `u >= rho`.
    pub fn representative(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.exact().unwrap_or(0.0))
            .collect()
    }

    /// The less informative outcome seen at seed `u >= rho`.
    pub fn coarsen(&self, scheme: &ThresholdScheme, u: Seed) -> Result<Outcome> {
        if u.value() < self.rho() {
            return Err(Error::InvalidValue(format!(
                "cannot coarsen to seed {} below {}",
                u.value(),
                self.rho()
            )));
        }
        sample_vector(&DataVector(self.representative()), u, scheme)
    }
}

/// Samples one vector at seed `u`.
pub fn sample_vector(v: &DataVector, u: Seed, scheme: &ThresholdScheme) -> Result<Outcome> {
    if v.arity() != scheme.arity() {
        return Err(Error::ArityMismatch { expected: scheme.arity(), got: v.arity() });
    }
    let entries = v
        .entries()
        .iter()
        .zip(scheme.entries())
        .map(|(&x, e)| {
            let t = e.at(u.value());
            if x >= t {
                EntryBound::Exact(x)
            } else {
                EntryBound::Below(t)
            }
        })
        .collect();
    Ok(Outcome { rho: u, entries })
}

/// Per-entry encoding of the consistent set: exact points and `[0, b)` intervals.
pub fn consistent_bounds(outcome: &Outcome) -> Vec<EntryBound> {
    outcome.entries.clone()
}

/// Items (rows) by instances (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMatrix {
    keys: Vec<String>,
    rows: Vec<DataVector>,
    r: usize,
}

impl InstanceMatrix {
    pub fn new(r: usize, keys: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if r == 0 {
            return Err(Error::MalformedMatrix("matrix needs at least one instance".into()));
        }
        if keys.len() != rows.len() {
            return Err(Error::MalformedMatrix(format!("{} keys for {} rows", keys.len(), rows.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for k in &keys {
            if !seen.insert(k.as_str()) {
                return Err(Error::MalformedMatrix(format!("duplicate key {k}")));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(n, row)| {
                if row.len() != r {
                    return Err(Error::MalformedMatrix(format!(
                        "row {} has {} entries, expected {r}",
                        n + 1,
                        row.len()
                    )));
                }
                DataVector::new(row).map_err(|e| Error::MalformedMatrix(format!("row {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { keys, rows, r })
    }

    pub fn empty(r: usize) -> Self {
        Self { keys: Vec::new(), rows: Vec::new(), r }
    }

    pub fn arity(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn rows(&self) -> &[DataVector] {
        &self.rows
    }

    pub fn row(&self, key: &str) -> Option<&DataVector> {
        self.keys.iter().position(|k| k == key).map(|i| &self.rows[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub key: String,
    pub outcome: Outcome,
}

impl SampleRecord {
    pub fn seed(&self) -> Seed {
        self.outcome.seed()
    }
}

/// Samples of every item of a matrix plus the metadata that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub r: usize,
    pub scheme: ThresholdScheme,
    pub salt: String,
    pub records: Vec<SampleRecord>,
}

impl SampleSet {
    pub fn get(&self, key: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.key == key)
    }
}

/// Samples every item with one hashed seed shared across its instances.
pub fn sample_matrix(matrix: &InstanceMatrix, scheme: &ThresholdScheme, salt: &str) -> Result<SampleSet> {
    let seeds: Vec<Seed> = matrix
        .keys()
        .iter()
        .map(|k| seed_from_key(k.as_bytes(), salt.as_bytes()))
        .collect();
    sample_matrix_with_seeds(matrix, scheme, salt, &seeds)
}

/// Like [`sample_matrix`] with externally supplied seeds (test fixtures).
pub fn sample_matrix_with_seeds(
    matrix: &InstanceMatrix,
    scheme: &ThresholdScheme,
    salt: &str,
    seeds: &[Seed],
) -> Result<SampleSet> {
    if matrix.arity() != scheme.arity() {
        return Err(Error::ArityMismatch { expected: scheme.arity(), got: matrix.arity() });
    }
    if seeds.len() != matrix.len() {
        return Err(Error::MalformedMatrix(format!("{} seeds for {} items", seeds.len(), matrix.len())));
    }
    let records = matrix
        .keys()
        .iter()
        .zip(matrix.rows())
        .zip(seeds)
        .map(|((key, v), &u)| {
            Ok(SampleRecord { key: key.clone(), outcome: sample_vector(v, u, scheme)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet { r: matrix.arity(), scheme: scheme.clone(), salt: salt.to_string(), records })
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    r: usize,
    scheme: ThresholdScheme,
    salt: String,
}

#[derive(Serialize, Deserialize)]
struct FileRecord {
    key: String,
    seed: f64,
    sampled: BTreeMap<String, f64>,
    // `None` encodes an unbounded cut (step scheme above its last breakpoint).
    bounds: BTreeMap<String, Option<f64>>,
}

/// Writes the JSON-lines sample file: a header line, then one line per item.
/// Entry indices in the file are 1-based.
pub fn write_sample_file<W: Write>(set: &SampleSet, mut out: W) -> Result<()> {
    let header = FileHeader { r: set.r, scheme: set.scheme.clone(), salt: set.salt.clone() };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for rec in &set.records {
        let mut sampled = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for (i, e) in rec.outcome.entries().iter().enumerate() {
            match *e {
                EntryBound::Exact(x) => {
                    sampled.insert((i + 1).to_string(), x);
                }
                EntryBound::Below(b) => {
                    bounds.insert((i + 1).to_string(), b.is_finite().then_some(b));
                }
            }
        }
        let line = FileRecord { key: rec.key.clone(), seed: rec.seed().value(), sampled, bounds };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

pub fn read_sample_file<R: BufRead>(input: R) -> Result<SampleSet> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or_else(|| Error::Parse("empty sample file".into()))??;
    let header: FileHeader = serde_json::from_str(&header_line)?;
    if header.scheme.arity() != header.r {
        return Err(Error::Parse("header arity does not match scheme".into()));
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FileRecord = serde_json::from_str(&line)?;
        let seed = Seed::new(rec.seed)?;
        let mut entries = vec![None; header.r];
        let index = |s: &str| -> Result<usize> {
            let i: usize = s.parse().map_err(|_| Error::Parse(format!("bad entry index {s}")))?;
            if i == 0 || i > header.r {
                return Err(Error::IndexOutOfRange { index: i, arity: header.r });
            }
            Ok(i - 1)
        };
        for (k, x) in &rec.sampled {
            entries[index(k)?] = Some(EntryBound::Exact(*x));
        }
        for (k, b) in &rec.bounds {
            entries[index(k)?] = Some(EntryBound::Below(b.unwrap_or(f64::INFINITY)));
        }
        let entries = entries
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Parse(format!("record {} does not cover every entry", n + 2)))?;
        let outcome = Outcome::from_parts(seed, entries);
        outcome.validate(&header.scheme)?;
        records.push(SampleRecord { key: rec.key, outcome });
    }
    Ok(SampleSet { r: header.r, scheme: header.scheme, salt: header.salt, records })
}
