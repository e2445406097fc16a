//! Order-optimal estimators on finite domains with step thresholds.
//!
//! Seeds are cut into intervals by the breakpoints; on each interval an
//! outcome is identified with the set of domain vectors consistent with it.
//! Cells (outcome, interval) are filled from the largest seeds down: a cell's
//! value comes from the hull of its order-minimal consistent vector, anchored
//! at the mass that vector already received on larger seeds, and that hull
//! also fills the vector's remaining cells.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::sampling::{EntryBound, Outcome, ThresholdScheme};

/// Number type for table arithmetic: `f64`, or `BigRational` for exact tables.
pub trait Scalar: Num + Clone + PartialOrd + fmt::Display + fmt::Debug + Send + Sync {
    fn to_f64(&self) -> f64;
    fn from_f64(x: f64) -> Option<Self>;
    fn pow_real(&self, p: f64) -> Self;
    /// Equality up to the type's rounding.
    fn same(&self, other: &Self) -> bool;
}

impl Scalar for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }

    fn pow_real(&self, p: f64) -> Self {
        self.powf(p)
    }

    fn same(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * self.abs().max(other.abs()).max(1.0)
    }
}

impl Scalar for BigRational {
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }

    /// Exact for integer exponents, rounded through `f64` otherwise.
    fn pow_real(&self, p: f64) -> Self {
        if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
            if self.is_zero() && p <= 0.0 {
                return if p == 0.0 { BigRational::one() } else { BigRational::from_integer(BigInt::zero()) };
            }
            return self.pow(p as i32);
        }
        BigRational::from_float(Scalar::to_f64(self).powf(p)).unwrap_or_else(BigRational::zero)
    }

    fn same(&self, other: &Self) -> bool {
        self == other
    }
}

/// The priority order `≺` among vectors consistent with a common outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSpec {
    /// Smaller function values first.
    LowerFirst,
    /// Larger function values first.
    HigherFirst,
    /// Explicit chains of domain indices, earliest first. Vectors in
    /// different chains are incomparable.
    Chains(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableOutcome<S> {
    pub label: String,
    /// Domain indices of the consistent vectors.
    pub members: Vec<usize>,
    pub lower_bound: S,
    /// Estimate per interval index.
    pub cells: BTreeMap<usize, S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorTable<S> {
    pub function: String,
    pub domain: Vec<Vec<S>>,
    pub values: Vec<S>,
    pub breakpoints: Vec<S>,
    pub levels: Vec<S>,
    pub order: OrderSpec,
    pub outcomes: Vec<TableOutcome<S>>,
}

fn eval_exact<S: Scalar>(fspec: &FunctionSpec, v: &[S]) -> Result<S> {
    fspec.check_arity(v.len())?;
    match *fspec {
        FunctionSpec::RgPPlus { p } => {
            fspec.validate()?;
            let d = v[0].clone() - v[1].clone();
            Ok(if d > S::zero() { d.pow_real(p) } else { S::zero() })
        }
        FunctionSpec::RgP { p } => {
            fspec.validate()?;
            let mut lo = v[0].clone();
            let mut hi = v[0].clone();
            for x in v {
                if *x < lo {
                    lo = x.clone();
                }
                if *x > hi {
                    hi = x.clone();
                }
            }
            Ok((hi - lo).pow_real(p))
        }
        _ => {
            let xs: Vec<f64> = v.iter().map(Scalar::to_f64).collect();
            let y = fspec.value(&xs)?;
            S::from_f64(y).ok_or_else(|| Error::InvalidValue(format!("function value {y} is not finite")))
        }
    }
}

impl<S: Scalar> EstimatorTable<S> {
    pub fn intervals(&self) -> usize {
        let n = self.breakpoints.len();
        if self.breakpoints[n - 1] == S::one() {
            n
        } else {
            n + 1
        }
    }

    pub fn lower(&self, j: usize) -> S {
        if j == 0 {
            S::zero()
        } else {
            self.breakpoints[j - 1].clone()
        }
    }

    pub fn upper(&self, j: usize) -> S {
        self.breakpoints.get(j).cloned().unwrap_or_else(S::one)
    }

    fn width(&self, j: usize) -> S {
        self.upper(j) - self.lower(j)
    }

    /// Whether `w` produces the outcome with the given sampled entries at interval `j`.
    fn consistent(&self, j: usize, sampled: &[Option<S>], w: &[S]) -> bool {
        sampled.iter().zip(w).all(|(s, x)| match s {
            Some(y) => x == y,
            None => j >= self.levels.len() || *x < self.levels[j],
        })
    }

    fn pattern(&self, j: usize, v: &[S]) -> Vec<Option<S>> {
        v.iter()
            .map(|x| (j < self.levels.len() && *x >= self.levels[j]).then(|| x.clone()))
            .collect()
    }

    fn label(&self, sampled: &[Option<S>], members: &[usize]) -> String {
        let parts: Vec<String> = sampled
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Some(x) => x.to_string(),
                None => {
                    let first = &self.domain[members[0]][i];
                    if members.iter().all(|&m| self.domain[m][i] == *first) {
                        first.to_string()
                    } else {
                        let mut hi = first.clone();
                        for &m in members {
                            if self.domain[m][i] > hi {
                                hi = self.domain[m][i].clone();
                            }
                        }
                        format!("≤{hi}")
                    }
                }
            })
            .collect();
        format!("({})", parts.join(","))
    }

    fn order_min(&self, members: &[usize]) -> Result<usize> {
        if let [only] = members {
            return Ok(*only);
        }
        let names = || members.iter().map(|&m| self.vector_label(m)).collect::<Vec<_>>().join(", ");
        let by_value = |higher: bool| -> Result<usize> {
            let mut best = members[0];
            let mut tied = false;
            for &m in &members[1..] {
                let (a, b) = (&self.values[m], &self.values[best]);
                let wins = if higher { a > b } else { a < b };
                if wins {
                    best = m;
                    tied = false;
                } else if a.same(b) {
                    tied = true;
                }
            }
            if tied {
                return Err(Error::OrderNotTotal(format!("tied function values among {}", names())));
            }
            Ok(best)
        };
        match &self.order {
            OrderSpec::LowerFirst => by_value(false),
            OrderSpec::HigherFirst => by_value(true),
            OrderSpec::Chains(chains) => {
                for chain in chains {
                    if members.iter().all(|m| chain.contains(m)) {
                        return Ok(*chain.iter().find(|c| members.contains(c)).unwrap());
                    }
                }
                Err(Error::OrderNotTotal(format!("no chain orders {}", names())))
            }
        }
    }

    pub fn vector_label(&self, i: usize) -> String {
        let parts: Vec<String> = self.domain[i].iter().map(ToString::to_string).collect();
        format!("({})", parts.join(","))
    }

    /// The step scheme the table is defined over.
    pub fn scheme(&self) -> Result<ThresholdScheme> {
        let bp: Vec<f64> = self.breakpoints.iter().map(Scalar::to_f64).collect();
        let lv: Vec<f64> = self.levels.iter().map(Scalar::to_f64).collect();
        ThresholdScheme::step(self.domain[0].len(), &bp, &lv)
    }

    fn members_at(&self, j: usize, v: &[S]) -> Vec<usize> {
        let sampled = self.pattern(j, v);
        (0..self.domain.len()).filter(|&w| self.consistent(j, &sampled, &self.domain[w])).collect()
    }

    /// `Σ width × estimate` over the cells of domain vector `i`.
    pub fn mass(&self, i: usize) -> Result<S> {
        let mut total = S::zero();
        for j in 0..self.intervals() {
            let members = self.members_at(j, &self.domain[i]);
            let x = self
                .outcomes
                .iter()
                .find(|o| o.members == members)
                .and_then(|o| o.cells.get(&j))
                .ok_or_else(|| Error::UnknownOutcome(format!("{} on interval {j}", self.vector_label(i))))?;
            total = total + x.clone() * self.width(j);
        }
        Ok(total)
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> EstimatorTable<T> {
        let vv = |xs: &Vec<S>| xs.iter().map(&f).collect::<Vec<T>>();
        EstimatorTable {
            function: self.function.clone(),
            domain: self.domain.iter().map(vv).collect(),
            values: vv(&self.values),
            breakpoints: vv(&self.breakpoints),
            levels: vv(&self.levels),
            order: self.order.clone(),
            outcomes: self
                .outcomes
                .iter()
                .map(|o| TableOutcome {
                    label: o.label.clone(),
                    members: o.members.clone(),
                    lower_bound: f(&o.lower_bound),
                    cells: o.cells.iter().map(|(&j, x)| (j, f(x))).collect(),
                })
                .collect(),
        }
    }

    pub fn to_f64_table(&self) -> EstimatorTable<f64> {
        self.map_scalar(Scalar::to_f64)
    }

    pub fn to_json(&self) -> Value {
        let num = |x: &S| json!({ "exact": x.to_string(), "value": x.to_f64() });
        json!({
            "function": self.function,
            "breakpoints": self.breakpoints.iter().map(num).collect::<Vec<_>>(),
            "levels": self.levels.iter().map(num).collect::<Vec<_>>(),
            "domain": (0..self.domain.len()).map(|i| json!({
                "vector": self.vector_label(i),
                "value": num(&self.values[i]),
            })).collect::<Vec<_>>(),
            "order": self.order,
            "outcomes": self.outcomes.iter().map(|o| json!({
                "label": o.label,
                "members": o.members.iter().map(|&m| self.vector_label(m)).collect::<Vec<_>>(),
                "lower_bound": num(&o.lower_bound),
                "cells": o.cells.iter().map(|(&j, x)| json!({
                    "interval": [num(&self.lower(j)), num(&self.upper(j))],
                    "estimate": num(x),
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    /// One line per cell with a positive lower bound, grouped by outcome.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for o in self.outcomes.iter().filter(|o| o.lower_bound > S::zero()) {
            for (&j, x) in &o.cells {
                out.push_str(&format!("{:<12} ({}, {}]  {}\n", o.label, self.lower(j), self.upper(j), x));
            }
        }
        out
    }

    /// The cell estimate for `outcome`, which must come from the table's scheme.
    pub fn estimate(&self, outcome: &Outcome) -> Result<f64> {
        let rho = outcome.rho();
        let j = (0..self.intervals())
            .find(|&j| rho <= self.upper(j).to_f64())
            .unwrap_or(self.intervals() - 1);
        let members: Vec<usize> = (0..self.domain.len())
            .filter(|&i| {
                self.domain[i]
                    .iter()
                    .zip(outcome.entries())
                    .all(|(x, b)| match *b {
                        EntryBound::Exact(y) => x.to_f64() == y,
                        EntryBound::Below(t) => x.to_f64() < t,
                    })
            })
            .collect();
        self.outcomes
            .iter()
            .find(|o| o.members == members)
            .and_then(|o| o.cells.get(&j))
            .map(Scalar::to_f64)
            .ok_or_else(|| Error::UnknownOutcome(format!("no cell for {outcome:?}")))
    }
}

pub fn order_optimal_estimate<S: Scalar>(table: &EstimatorTable<S>, outcome: &Outcome) -> Result<f64> {
    table.estimate(outcome)
}

fn check_inputs<S: Scalar>(domain: &[Vec<S>], breakpoints: &[S], levels: &[S]) -> Result<()> {
    let increasing = |xs: &[S]| xs.windows(2).all(|w| w[0] < w[1]);
    if breakpoints.is_empty() || breakpoints.len() != levels.len() || !increasing(breakpoints) || !increasing(levels) {
        return Err(Error::InvalidScheme("need matching strictly increasing breakpoints and levels".into()));
    }
    if breakpoints[0] <= S::zero() || breakpoints[breakpoints.len() - 1] > S::one() || levels[0] <= S::zero() {
        return Err(Error::InvalidScheme("breakpoints must lie in (0,1] and levels must be positive".into()));
    }
    let r = domain.first().map(Vec::len).ok_or_else(|| Error::InvalidValue("empty domain".into()))?;
    if domain.iter().any(|v| v.len() != r) {
        return Err(Error::InvalidValue("domain vectors differ in arity".into()));
    }
    if domain.iter().flatten().any(|x| *x < S::zero()) {
        return Err(Error::InvalidValue("domain entries must be nonnegative".into()));
    }
    Ok(())
}

/// Builds the order-optimal table for `fspec` on `domain`.
pub fn order_optimal_build<S: Scalar>(
    fspec: &FunctionSpec,
    domain: Vec<Vec<S>>,
    breakpoints: Vec<S>,
    levels: Vec<S>,
    order: OrderSpec,
) -> Result<EstimatorTable<S>> {
    check_inputs(&domain, &breakpoints, &levels)?;
    if let OrderSpec::Chains(chains) = &order {
        if let Some(&bad) = chains.iter().flatten().find(|&&i| i >= domain.len()) {
            return Err(Error::IndexOutOfRange { index: bad, arity: domain.len() });
        }
    }
    let values = domain.iter().map(|v| eval_exact(fspec, v)).collect::<Result<Vec<S>>>()?;
    let mut table = EstimatorTable {
        function: fspec.to_string(),
        domain,
        values,
        breakpoints,
        levels,
        order,
        outcomes: Vec::new(),
    };
    let n_int = table.intervals();
    let n_vec = table.domain.len();

    // outcome of each vector on each interval
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut cell_of = vec![vec![0usize; n_int]; n_vec];
    let mut by_interval: Vec<Vec<usize>> = vec![Vec::new(); n_int];
    for (i, row) in cell_of.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let sampled = table.pattern(j, &table.domain[i]);
            let members = table.members_at(j, &table.domain[i]);
            let id = match index.get(&members) {
                Some(&id) => id,
                None => {
                    let mut lb = table.values[members[0]].clone();
                    for &m in &members {
                        if table.values[m] < lb {
                            lb = table.values[m].clone();
                        }
                    }
                    table.outcomes.push(TableOutcome {
                        label: table.label(&sampled, &members),
                        members: members.clone(),
                        lower_bound: lb,
                        cells: BTreeMap::new(),
                    });
                    index.insert(members, table.outcomes.len() - 1);
                    table.outcomes.len() - 1
                }
            };
            if !by_interval[j].contains(&id) {
                by_interval[j].push(id);
            }
            *slot = id;
        }
    }

    for i in 0..n_vec {
        let limit = &table.outcomes[cell_of[i][0]].lower_bound;
        if !limit.same(&table.values[i]) {
            return Err(Error::NotEstimable { limit: limit.to_f64(), value: table.values[i].to_f64() });
        }
    }

    for k in (0..n_int).rev() {
        for &o in &by_interval[k] {
            if table.outcomes[o].cells.contains_key(&k) {
                continue;
            }
            if table.outcomes[o].lower_bound.is_zero() {
                table.outcomes[o].cells.insert(k, S::zero());
                continue;
            }
            let v = table.order_min(&table.outcomes[o].members)?;
            let mut m = S::zero();
            for j in k + 1..n_int {
                m = m + table.outcomes[cell_of[v][j]].cells[&j].clone() * table.width(j);
            }
            fill_hull(&mut table, &cell_of[v], v, k, m)?;
        }
    }

    for i in 0..n_vec {
        let mut total = S::zero();
        for j in 0..n_int {
            total = total + table.outcomes[cell_of[i][j]].cells[&j].clone() * table.width(j);
        }
        if !total.same(&table.values[i]) {
            return Err(Error::Infeasible(format!(
                "{} receives {} instead of {}",
                table.vector_label(i),
                total,
                table.values[i]
            )));
        }
    }
    Ok(table)
}

/// Lower hull of the step curve of vector `v` on intervals `0..=k`, anchored at
/// `(upper(k), m)`; writes its slopes into `v`'s unassigned cells.
fn fill_hull<S: Scalar>(table: &mut EstimatorTable<S>, cells: &[usize], v: usize, k: usize, m: S) -> Result<()> {
    let mut x = table.upper(k);
    let mut y = m;
    let mut top = k as isize;
    while top >= 0 {
        let mut best: Option<(usize, S)> = None;
        for j in 0..=top as usize {
            let c = table.outcomes[cells[j]].lower_bound.clone();
            let slope = (c - y.clone()) / (x.clone() - table.lower(j));
            // ties go to the smaller touching point, i.e. the earlier interval
            let better = match &best {
                None => true,
                Some((_, b)) => slope < *b && !slope.same(b),
            };
            if better {
                best = Some((j, slope));
            }
        }
        let (j, slope) = best.expect("at least one interval");
        if slope < S::zero() && !slope.same(&S::zero()) {
            return Err(Error::Infeasible(format!(
                "{} has already received more than its lower bound allows",
                table.vector_label(v)
            )));
        }
        for i in j..=top as usize {
            table.outcomes[cells[i]].cells.entry(i).or_insert_with(|| slope.clone());
        }
        x = table.lower(j);
        y = table.outcomes[cells[j]].lower_bound.clone();
        top = j as isize - 1;
    }
    Ok(())
}
