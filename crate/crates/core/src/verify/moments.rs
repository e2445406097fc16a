//! First and second moments of estimators over the seed, for a fixed vector.

use serde::Serialize;

use crate::curve::curve_from_data;
use crate::error::{Error, Result};
use crate::estimators::{
    ht_applicable, ustar_closed, ustar_path, EstimatorKind, EstimatorTable, LstarPath, UstarPath,
};
use crate::functions::FunctionSpec;
use crate::hull::{v_optimal, Hull};
use crate::quad::simpson_with_square;
use crate::sampling::{sample_vector, sort_dedup, DataVector, Seed, ThresholdScheme};

/// Below this seed the estimate is replaced by a fitted power law.
pub const TAIL_EPS: f64 = 1e-12;
/// Relative nudge off breakpoints so each piece is integrated on its own side.
const EDGE_NUDGE: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub expectation: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub f_value: f64,
    pub quadrature_error_bound: f64,
    /// The second moment is infinite.
    pub divergent: bool,
}

impl MomentReport {
    fn new(expectation: f64, second_moment: f64, f_value: f64, error: f64) -> Self {
        let divergent = !second_moment.is_finite();
        Self {
            expectation,
            second_moment,
            variance: second_moment - expectation * expectation,
            f_value,
            quadrature_error_bound: error,
            divergent,
        }
    }
}

/// The estimate of one estimator along the outcomes of a fixed vector.
pub(crate) enum PathRate<'a> {
    Lstar(LstarPath),
    UstarClosed { fspec: &'a FunctionSpec, scheme: &'a ThresholdScheme, v: &'a DataVector },
    Hull(Hull),
    Table { table: &'a EstimatorTable<f64>, scheme: ThresholdScheme, v: &'a DataVector },
}

impl PathRate<'_> {
    pub(crate) fn rate(&self, u: f64) -> f64 {
        match self {
            PathRate::Lstar(p) => p.rate(u),
            PathRate::UstarClosed { fspec, scheme, v } => Seed::new(u)
                .and_then(|s| sample_vector(v, s, scheme))
                .ok()
                .and_then(|o| ustar_closed(fspec, scheme, &o))
                .unwrap_or(f64::NAN),
            PathRate::Hull(h) => h.rate(u).unwrap_or(0.0),
            PathRate::Table { table, scheme, v } => Seed::new(u)
                .and_then(|s| sample_vector(v, s, scheme))
                .and_then(|o| table.estimate(&o))
                .unwrap_or(f64::NAN),
        }
    }
}

/// Whether U* has a closed form along every outcome of `v`.
pub(crate) fn ustar_has_closed_form(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> bool {
    Seed::new(TAIL_EPS)
        .and_then(|s| sample_vector(v, s, scheme))
        .map(|o| ustar_closed(fspec, scheme, &o).is_some())
        .unwrap_or(false)
}

/// Integral of `rate` and `rate^2` over `(lo, hi]`, split at `cuts`.
pub(crate) fn integrate_between(rate: &dyn Fn(f64) -> f64, lo: f64, hi: f64, cuts: &[f64], tol: f64) -> (f64, f64, f64) {
    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
    edges.push(hi);
    sort_dedup(&mut edges);
    let per = tol / edges.len() as f64;
    let (mut m1, mut m2, mut err) = (0.0, 0.0, 0.0);
    for w in edges.windows(2) {
        let a = w[0] * (1.0 + EDGE_NUDGE);
        let (q1, q2) = simpson_with_square(rate, a, w[1], per);
        m1 += q1.value;
        m2 += q2.value;
        err += q1.error + q2.error;
    }
    (m1, m2, err)
}

/// Integral of `rate` and `rate^2` over `(0, 1]`: pieces between `cuts`, the
/// first piece split into octaves down to [`TAIL_EPS`], and a power-law tail.
pub(crate) fn integrate_path(rate: &dyn Fn(f64) -> f64, cuts: &[f64], tol: f64) -> (f64, f64, f64) {
    let mut cuts: Vec<f64> = cuts.iter().copied().filter(|&c| c > TAIL_EPS && c < 1.0).collect();
    sort_dedup(&mut cuts);
    let first = cuts.first().copied().unwrap_or(1.0);
    let (mut m1, mut m2, mut err) = integrate_between(rate, first, 1.0, &cuts, tol);
    let mut hi = first;
    while hi > TAIL_EPS {
        let lo = (0.5 * hi).max(TAIL_EPS);
        let (q1, q2) = simpson_with_square(rate, lo, hi, tol * 1e-2);
        m1 += q1.value;
        m2 += q2.value;
        err += q1.error + q2.error;
        hi = lo;
    }
    let (e1, e2) = (rate(TAIL_EPS), rate(2.0 * TAIL_EPS));
    let beta = if e1 > 0.0 && e2 > 0.0 && e1 > e2 { (e1 / e2).log2() } else { 0.0 };
    let tail1 = if beta < 1.0 { e1 * TAIL_EPS / (1.0 - beta) } else { f64::INFINITY };
    let tail2 = if beta < 0.5 { e1 * e1 * TAIL_EPS / (1.0 - 2.0 * beta) } else { f64::INFINITY };
    (m1 + tail1, m2 + tail2, err + tail1.min(1.0) * 1e-3)
}

fn cuts_for(scheme: &ThresholdScheme, v: &DataVector, extra: &[f64]) -> Vec<f64> {
    let mut cuts = scheme.breakpoints(v.entries());
    cuts.extend_from_slice(extra);
    cuts
}

/// Moments by quadrature along the path, whatever the estimator.
pub(crate) fn numeric_moments(
    kind: &EstimatorKind,
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    v: &DataVector,
    tol: f64,
) -> Result<MomentReport> {
    let f_value = fspec.value(v.entries())?;
    let (path, extra) = match kind {
        EstimatorKind::Lstar => {
            let p = LstarPath::new(fspec, scheme, v)?;
            let extra = p.curve().breakpoints();
            (PathRate::Lstar(p), extra)
        }
        EstimatorKind::Ustar if ustar_has_closed_form(fspec, scheme, v) => {
            (PathRate::UstarClosed { fspec, scheme, v }, Vec::new())
        }
        EstimatorKind::VOptOracle(z) => {
            same_vector(z, v)?;
            let h = v_optimal(fspec, scheme, v)?;
            let extra = h.breakpoints();
            (PathRate::Hull(h), extra)
        }
        EstimatorKind::OrderOptimal(t) => (PathRate::Table { table: t, scheme: t.scheme()?, v }, Vec::new()),
        _ => return Err(Error::Unsupported(format!("no quadrature path for {}", kind.name()))),
    };
    let rate = |u: f64| path.rate(u);
    let (m1, m2, err) = integrate_path(&rate, &cuts_for(scheme, v, &extra), tol);
    Ok(MomentReport::new(m1, m2, f_value, err))
}

fn same_vector(z: &DataVector, v: &DataVector) -> Result<()> {
    if z != v {
        return Err(Error::InvalidValue("the v-optimal oracle only applies to its own vector".into()));
    }
    Ok(())
}

fn ustar_path_moments(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<MomentReport> {
    let f_value = fspec.value(v.entries())?;
    let UstarPath { rate_at_floor, mass, sq_mass, floor, .. } = ustar_path(fspec, scheme, v, TAIL_EPS, &[])?;
    let tail = rate_at_floor * floor;
    Ok(MomentReport::new(mass + tail, sq_mass + rate_at_floor * tail, f_value, 1e-6 * f_value.max(1.0)))
}

/// Moments of `kind` on `v`: analytic for Horvitz-Thompson and the v-optimal
/// oracle, quadrature otherwise.
pub fn moments(
    kind: &EstimatorKind,
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    v: &DataVector,
    tol: f64,
) -> Result<MomentReport> {
    let f_value = fspec.value(v.entries())?;
    match kind {
        EstimatorKind::HorvitzThompson => {
            let p = ht_applicable(fspec, scheme, v.entries())?;
            if f_value == 0.0 {
                return Ok(MomentReport::new(0.0, 0.0, 0.0, 0.0));
            }
            Ok(MomentReport::new(f_value, f_value * f_value / p, f_value, 0.0))
        }
        EstimatorKind::VOptOracle(z) => {
            same_vector(z, v)?;
            let h = v_optimal(fspec, scheme, v)?;
            Ok(MomentReport::new(h.mass(), h.second_moment(), f_value, 0.0))
        }
        EstimatorKind::Ustar if !ustar_has_closed_form(fspec, scheme, v) => ustar_path_moments(fspec, scheme, v),
        _ => numeric_moments(kind, fspec, scheme, v, tol),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub vector: Vec<f64>,
    pub estimator_second_moment: f64,
    pub optimal_second_moment: f64,
    pub ratio: f64,
}

/// Second moment of `kind` over the v-optimal one; 1 when `f(v) = 0`.
pub fn competitive_ratio(
    kind: &EstimatorKind,
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    v: &DataVector,
) -> Result<RatioReport> {
    let vector = v.entries().to_vec();
    if fspec.value(v.entries())? == 0.0 {
        return Ok(RatioReport { vector, estimator_second_moment: 0.0, optimal_second_moment: 0.0, ratio: 1.0 });
    }
    let opt = v_optimal(fspec, scheme, v)?.second_moment();
    let est = moments(kind, fspec, scheme, v, 1e-10)?.second_moment;
    Ok(RatioReport { vector, estimator_second_moment: est, optimal_second_moment: opt, ratio: est / opt })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TightnessReport {
    pub p: f64,
    pub opt_sm: f64,
    pub lstar_sm: f64,
    pub ratio: f64,
    pub numeric_opt_sm: f64,
    pub numeric_lstar_sm: f64,
    pub numeric_ratio: f64,
    /// Largest relative gap between a formula and its numeric counterpart.
    pub max_rel_gap: f64,
}

/// The family `(1 - v^(1-p))/(1 - p)` at `v = 0`, whose L* ratio tends to 4.
pub fn tightness_family(p: f64) -> Result<TightnessReport> {
    let fspec = FunctionSpec::TightFamily { p };
    fspec.validate()?;
    let scheme = ThresholdScheme::unit_pps(1);
    let v = DataVector::new(vec![0.0])?;
    let opt_sm = 1.0 / (1.0 - 2.0 * p);
    let lstar_sm = 2.0 / ((1.0 - 2.0 * p) * (1.0 - p));
    let ratio = 2.0 / (1.0 - p);

    let numeric_lstar_sm = numeric_moments(&EstimatorKind::Lstar, &fspec, &scheme, &v, 1e-10)?.second_moment;
    let numeric_opt_sm = numeric_moments(&EstimatorKind::VOptOracle(v.clone()), &fspec, &scheme, &v, 1e-10)?.second_moment;
    let numeric_ratio = numeric_lstar_sm / numeric_opt_sm;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let max_rel_gap = rel(numeric_opt_sm, opt_sm).max(rel(numeric_lstar_sm, lstar_sm)).max(rel(numeric_ratio, ratio));
    Ok(TightnessReport { p, opt_sm, lstar_sm, ratio, numeric_opt_sm, numeric_lstar_sm, numeric_ratio, max_rel_gap })
}

/// Lower-bound curve at 0 versus the function value: the estimability check
/// used before computing any moments.
pub fn is_estimable(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<bool> {
    let c = curve_from_data(fspec, scheme, v)?;
    let f = fspec.value(v.entries())?;
    Ok((c.at_start() - f).abs() <= 1e-12 * f.max(1.0))
}
