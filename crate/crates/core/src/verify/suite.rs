//! Grid checks of estimator properties. Failures are collected, not raised.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{ht_applicable, ustar_path, EstimatorKind, LstarPath};
use crate::functions::FunctionSpec;
use crate::hull::v_optimal;
use crate::range::lambda_bounds;
use crate::sampling::{sample_vector, DataVector, Seed, ThresholdScheme};

use super::moments::{integrate_between, moments, ustar_has_closed_form, PathRate, TAIL_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub unbiased: f64,
    pub range: f64,
    pub monotone: f64,
    pub domination: f64,
    pub ratio_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { unbiased: 1e-6, range: 1e-6, monotone: 1e-9, domination: 1e-9, ratio_bound: 4.0 + 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub fspec: FunctionSpec,
    pub scheme: ThresholdScheme,
    pub vectors: Vec<DataVector>,
    /// Seeds in `(0, 1]` for the pointwise checks.
    pub seeds: Vec<f64>,
    pub tolerances: Tolerances,
    pub check_ustar: bool,
    pub check_ht: bool,
}

impl SuiteConfig {
    /// `k x k` grid on `[0, 1]^2` and seeds `i/99`, all checks on.
    pub fn square_grid(fspec: FunctionSpec, k: usize) -> Self {
        let axis: Vec<f64> = (0..k).map(|i| if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 }).collect();
        let vectors = axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| DataVector::new(vec![a, b]).expect("grid values are valid")))
            .collect();
        Self {
            fspec,
            scheme: ThresholdScheme::unit_pps(2),
            vectors,
            seeds: (1..=99).map(|i| i as f64 / 99.0).collect(),
            tolerances: Tolerances::default(),
            check_ustar: true,
            check_ht: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Unbiased,
    Nonnegative,
    Monotone,
    InRange,
    Domination,
    RatioBound,
    Applicable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub check: Check,
    pub estimator: &'static str,
    pub vector: Vec<f64>,
    pub seed: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteReport {
    pub vectors: usize,
    pub points: usize,
    pub max_lstar_ratio: f64,
    pub argmax: Option<Vec<f64>>,
    pub violations: Vec<Violation>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }

    fn merge(mut self, other: SuiteReport) -> SuiteReport {
        self.vectors += other.vectors;
        self.points += other.points;
        if other.max_lstar_ratio > self.max_lstar_ratio {
            self.max_lstar_ratio = other.max_lstar_ratio;
            self.argmax = other.argmax;
        }
        self.violations.extend(other.violations);
        self
    }
}

struct Recorder<'a> {
    vector: &'a [f64],
    report: SuiteReport,
}

impl Recorder<'_> {
    fn fail(&mut self, check: Check, estimator: &'static str, seed: Option<f64>, detail: String) {
        self.report.violations.push(Violation { check, estimator, vector: self.vector.to_vec(), seed, detail });
    }

    fn expect(&mut self, ok: bool, check: Check, estimator: &'static str, seed: Option<f64>, detail: impl FnOnce() -> String) {
        if !ok {
            self.fail(check, estimator, seed, detail());
        }
    }
}

pub fn property_suite(config: &SuiteConfig) -> SuiteReport {
    let mut seeds: Vec<f64> = config.seeds.iter().copied().filter(|&u| u > 0.0 && u <= 1.0).collect();
    seeds.sort_by(|a, b| b.partial_cmp(a).expect("finite seeds"));
    seeds.dedup();
    config
        .vectors
        .par_iter()
        .map(|v| {
            let mut rec = Recorder { vector: v.entries(), report: SuiteReport { vectors: 1, ..Default::default() } };
            if let Err(e) = check_vector(config, v, &seeds, &mut rec) {
                rec.fail(Check::Applicable, "any", None, e.to_string());
            }
            rec.report
        })
        .reduce(SuiteReport::default, SuiteReport::merge)
}

fn check_vector(config: &SuiteConfig, v: &DataVector, seeds: &[f64], rec: &mut Recorder) -> Result<()> {
    let (fspec, scheme, tol) = (&config.fspec, &config.scheme, &config.tolerances);
    let f = fspec.value(v.entries())?;
    let ubtol = tol.unbiased * f.max(1.0);

    let hull = v_optimal(fspec, scheme, v)?;
    rec.expect((hull.mass() - f).abs() <= ubtol, Check::Unbiased, "vopt", None, || {
        format!("mass {} vs {f}", hull.mass())
    });

    let lm = moments(&EstimatorKind::Lstar, fspec, scheme, v, 1e-10)?;
    rec.expect((lm.expectation - f).abs() <= ubtol, Check::Unbiased, "lstar", None, || {
        format!("mean {} vs {f}", lm.expectation)
    });
    if f > 0.0 {
        let ratio = lm.second_moment / hull.second_moment();
        if ratio > rec.report.max_lstar_ratio {
            rec.report.max_lstar_ratio = ratio;
            rec.report.argmax = Some(v.entries().to_vec());
        }
        rec.expect(ratio <= tol.ratio_bound, Check::RatioBound, "lstar", None, || format!("ratio {ratio}"));
    }

    if config.check_ht && f > 0.0 {
        if let Ok(p) = ht_applicable(fspec, scheme, v.entries()) {
            let ht_var = f * f / p - f * f;
            rec.expect(lm.variance <= ht_var + tol.domination, Check::Domination, "lstar", None, || {
                format!("var {} vs ht {ht_var}", lm.variance)
            });
        }
    }

    // pointwise: L* along the path with its mass above each seed by quadrature
    let path = LstarPath::new(fspec, scheme, v)?;
    let mut cuts = scheme.breakpoints(v.entries());
    cuts.extend(path.curve().breakpoints());
    let lrate = PathRate::Lstar(path);
    let rate = |u: f64| lrate.rate(u);
    let mut mass = 0.0;
    let mut above = 1.0;
    let mut last: Option<f64> = None;
    for &u in seeds {
        rec.report.points += 1;
        mass += integrate_between(&rate, u, above, &cuts, 1e-11).0;
        above = u;
        let est = rate(u);
        rec.expect(est >= 0.0, Check::Nonnegative, "lstar", Some(u), || format!("{est}"));
        if let Some(prev) = last {
            rec.expect(est + tol.monotone * est.abs().max(1.0) >= prev, Check::Monotone, "lstar", Some(u), || {
                format!("{est} below {prev} at a larger seed")
            });
        }
        last = Some(est);
        let outcome = sample_vector(v, Seed::new(u)?, scheme)?;
        match lambda_bounds(fspec, scheme, &outcome, mass) {
            Ok(r) => rec.expect(r.contains(est, tol.range * est.abs().max(1.0)), Check::InRange, "lstar", Some(u), || {
                format!("{est} outside [{}, {}]", r.lambda_l, r.lambda_u)
            }),
            Err(e) => rec.fail(Check::InRange, "lstar", Some(u), e.to_string()),
        }
    }

    if config.check_ustar {
        check_ustar(config, v, f, seeds, rec)?;
    }
    Ok(())
}

fn check_ustar(config: &SuiteConfig, v: &DataVector, f: f64, seeds: &[f64], rec: &mut Recorder) -> Result<()> {
    let (fspec, scheme, tol) = (&config.fspec, &config.scheme, &config.tolerances);
    let ubtol = tol.unbiased * f.max(1.0);
    let um = moments(&EstimatorKind::Ustar, fspec, scheme, v, 1e-10)?;
    rec.expect((um.expectation - f).abs() <= ubtol, Check::Unbiased, "ustar", None, || {
        format!("mean {} vs {f}", um.expectation)
    });

    // (seed, estimate, mass above)
    let points: Vec<(f64, f64, f64)> = if ustar_has_closed_form(fspec, scheme, v) {
        let rate_fn = PathRate::UstarClosed { fspec, scheme, v };
        let rate = |u: f64| rate_fn.rate(u);
        let cuts = scheme.breakpoints(v.entries());
        let mut mass = 0.0;
        let mut above = 1.0;
        let mut pts = Vec::with_capacity(seeds.len());
        for &u in seeds {
            mass += integrate_between(&rate, u, above, &cuts, 1e-11).0;
            above = u;
            pts.push((u, rate(u), mass));
        }
        pts
    } else {
        let path = ustar_path(fspec, scheme, v, TAIL_EPS, seeds)?;
        path.marks.iter().map(|m| (m.seed, m.rate, m.mass)).collect()
    };
    for (u, est, mass) in points {
        rec.expect(est >= 0.0, Check::Nonnegative, "ustar", Some(u), || format!("{est}"));
        let outcome = sample_vector(v, Seed::new(u)?, scheme)?;
        match lambda_bounds(fspec, scheme, &outcome, mass) {
            Ok(r) => rec.expect(r.contains(est, tol.range * est.abs().max(1.0)), Check::InRange, "ustar", Some(u), || {
                format!("{est} outside [{}, {}]", r.lambda_l, r.lambda_u)
            }),
            Err(e) => rec.fail(Check::InRange, "ustar", Some(u), e.to_string()),
        }
    }
    Ok(())
}
