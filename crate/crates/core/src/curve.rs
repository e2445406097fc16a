//! Lower-bound curves: `u -> inf { f(z) : z consistent with the outcome at u }`.
//!
//! Curves are non-increasing and left-continuous, stored as analytic segments
//! on half-open intervals `(lo, hi]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::quad::power_log_integral;
use crate::sampling::{sample_vector, sort_dedup, DataVector, EntryBound, Outcome, Seed, ThresholdScheme};

/// Points on the geometric tabulation grid for oracle-backed curves.
pub const TABLE_POINTS: usize = 4096;
/// Left end of the tabulation grid.
pub const TABLE_MIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Form {
    Const { c: f64 },
    /// `intercept + slope * u`
    Linear { intercept: f64, slope: f64 },
    /// `scale * (shift - u)^exp`, with `shift >= u` on the segment.
    Power { scale: f64, shift: f64, exp: f64 },
    /// `(1 - u^(1-p)) / (1 - p)`
    TightArc { p: f64 },
}

impl Form {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Form::Const { c } => c,
            Form::Linear { intercept, slope } => intercept + slope * u,
            Form::Power { scale, shift, exp } => scale * (shift - u).max(0.0).powf(exp),
            Form::TightArc { p } => crate::functions::tight_value(p, u),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match *self {
            Form::Const { .. } => 0.0,
            Form::Linear { slope, .. } => slope,
            Form::Power { scale, shift, exp } => -scale * exp * (shift - u).max(0.0).powf(exp - 1.0),
            Form::TightArc { p } => -u.powf(-p),
        }
    }

    /// Strictly convex with a continuously varying slope; hulls can follow it.
    pub fn is_curved_convex(&self) -> bool {
        match *self {
            Form::Power { exp, .. } => exp > 1.0,
            Form::TightArc { p } => p > 0.0,
            _ => false,
        }
    }

    /// `∫_a^b g'(u)^2 du`.
    pub fn sq_deriv_integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            Form::Const { .. } => 0.0,
            Form::Linear { slope, .. } => slope * slope * (b - a),
            Form::Power { scale, shift, exp } => {
                let k = scale * exp;
                let q = 2.0 * exp - 1.0;
                if q.abs() < 1e-14 {
                    k * k * ((shift - a) / (shift - b)).ln()
                } else {
                    k * k * ((shift - a).powf(q) - (shift - b).max(0.0).powf(q)) / q
                }
            }
            Form::TightArc { p } => {
                let q = 1.0 - 2.0 * p;
                if q <= 0.0 && a == 0.0 {
                    f64::INFINITY
                } else {
                    (b.powf(q) - a.powf(q)) / q
                }
            }
        }
    }

    /// `-∫_a^b g'(u)/u du` for `0 < a <= b`.
    pub fn neg_deriv_over_u_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            Form::Const { .. } => 0.0,
            Form::Linear { slope, .. } => -slope * (b / a).ln(),
            Form::Power { scale, shift, exp } => {
                scale
                    * exp
                    * shift.powf(exp - 1.0)
                    * (power_log_integral(exp, a / shift) - power_log_integral(exp, (b / shift).min(1.0)))
            }
            Form::TightArc { p } => {
                if p == 0.0 {
                    (b / a).ln()
                } else {
                    (a.powf(-p) - b.powf(-p)) / p
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub form: Form,
}

impl Segment {
    /// Right limit at `lo`.
    pub fn at_lo(&self) -> f64 {
        self.form.value(self.lo)
    }

    pub fn at_hi(&self) -> f64 {
        self.form.value(self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseCurve {
    /// Left end of the domain; the curve is defined on `[start, 1]`.
    start: f64,
    /// Value at `start` itself (for full curves, the limit at 0).
    at_start: f64,
    segments: Vec<Segment>,
}

impl PiecewiseCurve {
    pub fn new(start: f64, at_start: f64, segments: Vec<Segment>) -> Result<Self> {
        let ok = !segments.is_empty()
            && segments[0].lo == start
            && segments.last().unwrap().hi == 1.0
            && segments.windows(2).all(|w| w[0].hi == w[1].lo)
            && segments.iter().all(|s| s.lo < s.hi);
        if !ok {
            return Err(Error::InvalidValue("segments must tile (start, 1]".into()));
        }
        Ok(Self { start, at_start, segments })
    }

    pub fn zero() -> Self {
        Self { start: 0.0, at_start: 0.0, segments: vec![Segment { lo: 0.0, hi: 1.0, form: Form::Const { c: 0.0 } }] }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u <= self.start || self.segments.is_empty() {
            return self.at_start;
        }
        let i = self.segments.partition_point(|s| s.hi < u);
        self.segments[i.min(self.segments.len() - 1)].form.value(u)
    }

    /// `lim_{x -> u+}`; equals `eval` away from jumps.
    pub fn right_limit(&self, u: f64) -> f64 {
        if self.segments.is_empty() {
            return self.at_start;
        }
        let i = self.segments.partition_point(|s| s.hi <= u);
        self.segments[i.min(self.segments.len() - 1)].form.value(u)
    }

    /// Value at the left end (the limit at `0+` for full curves).
    pub fn at_start(&self) -> f64 {
        self.at_start
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.lo).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.at_start == 0.0 && self.segments.iter().all(|s| s.at_lo() == 0.0 && s.at_hi() == 0.0)
    }

    /// The part on `[from, 1]`, with `at_from` as the value at `from`.
    pub fn restrict(&self, from: f64, at_from: f64) -> Self {
        if from >= 1.0 {
            return Self {
                start: 1.0,
                at_start: at_from,
                segments: vec![],
            };
        }
        let mut segments: Vec<Segment> = self.segments.iter().filter(|s| s.hi > from).copied().collect();
        if let Some(first) = segments.first_mut() {
            first.lo = first.lo.max(from);
        }
        Self { start: from, at_start: at_from, segments }
    }
}

fn geometric_grid(n: usize, lo: f64) -> Vec<f64> {
    let span = lo.ln();
    (0..n).map(|k| (span * (1.0 - k as f64 / (n - 1) as f64)).exp()).collect()
}

/// Lower-bound curve of `v` on `(0, 1]`.
pub fn curve_from_data(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<PiecewiseCurve> {
    fspec.validate()?;
    fspec.check_arity(v.arity())?;
    if v.arity() != scheme.arity() {
        return Err(Error::ArityMismatch { expected: scheme.arity(), got: v.arity() });
    }
    let x = v.entries();
    let mut cuts = scheme.breakpoints(x);
    let analytic_pps = scheme.is_pps() && !fspec.is_custom();
    if analytic_pps {
        for i in 0..x.len() {
            for j in 0..x.len() {
                cuts.push(x[i] / scheme.pps_rate(j).unwrap());
            }
        }
    }
    if let FunctionSpec::TightFamily { .. } = fspec {
        if !scheme.is_unit_pps() {
            return Err(Error::Unsupported("tight family outside unit-rate PPS".into()));
        }
        fspec.value(x)?;
    }
    cuts.retain(|&b| b > 0.0 && b < 1.0);
    sort_dedup(&mut cuts);
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(0.0);
    edges.extend(cuts);
    edges.push(1.0);

    let step_scheme = !scheme.is_pps();
    let mut segments = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let out = sample_vector(v, Seed::new(mid)?, scheme)?;
        if step_scheme {
            segments.push(Segment { lo: a, hi: b, form: Form::Const { c: fspec.lower_bound(out.entries()) } });
            continue;
        }
        match fspec {
            FunctionSpec::RgPPlus { p } => segments.push(Segment { lo: a, hi: b, form: rg_plus_form(*p, &out, scheme, mid) }),
            FunctionSpec::RgP { p } => segments.push(Segment { lo: a, hi: b, form: rg_form(*p, &out, scheme, mid) }),
            FunctionSpec::TightFamily { p } => {
                let form = if out.entries()[0].exact().is_some() {
                    Form::Const { c: crate::functions::tight_value(*p, x[0]) }
                } else {
                    Form::TightArc { p: *p }
                };
                segments.push(Segment { lo: a, hi: b, form });
            }
            FunctionSpec::Custom(_) => tabulate(fspec, scheme, &out, a, b, &mut segments),
        }
    }
    let at_start = segments[0].at_lo();
    PiecewiseCurve::new(0.0, at_start, merge_constants(segments))
}

/// Form of the lower bound just below the outcome's seed with its sampled set
/// held fixed. `None` for oracle-backed functions.
pub(crate) fn pattern_form(fspec: &FunctionSpec, scheme: &ThresholdScheme, out: &Outcome) -> Option<Form> {
    if !scheme.is_pps() {
        return Some(Form::Const { c: fspec.lower_bound(out.entries()) });
    }
    let mid = out.rho() * (1.0 - 1e-9);
    match fspec {
        FunctionSpec::RgPPlus { p } => Some(rg_plus_form(*p, out, scheme, mid)),
        FunctionSpec::RgP { p } => Some(rg_form(*p, out, scheme, mid)),
        FunctionSpec::TightFamily { p } => Some(match out.entries()[0].exact() {
            Some(x) => Form::Const { c: crate::functions::tight_value(*p, x) },
            None => Form::TightArc { p: *p },
        }),
        FunctionSpec::Custom(_) => None,
    }
}

fn rg_plus_form(p: f64, out: &Outcome, scheme: &ThresholdScheme, mid: f64) -> Form {
    let e = out.entries();
    match (e[0], e[1]) {
        (EntryBound::Below(_), _) => Form::Const { c: 0.0 },
        (EntryBound::Exact(a), EntryBound::Exact(b)) => Form::Const { c: (a - b).max(0.0).powf(p) },
        (EntryBound::Exact(a), EntryBound::Below(_)) => {
            let rate = scheme.pps_rate(1).unwrap();
            if a <= rate * mid {
                Form::Const { c: 0.0 }
            } else {
                Form::Power { scale: rate.powf(p), shift: a / rate, exp: p }
            }
        }
    }
}

fn rg_form(p: f64, out: &Outcome, scheme: &ThresholdScheme, mid: f64) -> Form {
    let exact: Vec<f64> = out.entries().iter().filter_map(|b| b.exact()).collect();
    if exact.is_empty() {
        return Form::Const { c: 0.0 };
    }
    let lo = exact.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = exact.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let free_rate = out
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.exact().is_none())
        .map(|(j, _)| scheme.pps_rate(j).unwrap())
        .fold(f64::INFINITY, f64::min);
    if !free_rate.is_finite() || lo <= free_rate * mid {
        Form::Const { c: (hi - lo).powf(p) }
    } else {
        Form::Power { scale: free_rate.powf(p), shift: hi / free_rate, exp: p }
    }
}

/// Oracle-backed curves: piecewise-linear interpolation on the geometric grid,
/// with the sampled set frozen to that of the interval `(a, b]`.
fn tabulate(fspec: &FunctionSpec, scheme: &ThresholdScheme, out: &Outcome, a: f64, b: f64, segs: &mut Vec<Segment>) {
    let eval = |u: f64| -> f64 {
        let bounds: Vec<EntryBound> = out
            .entries()
            .iter()
            .zip(scheme.entries())
            .map(|(e, t)| match e {
                EntryBound::Exact(x) => EntryBound::Exact(*x),
                EntryBound::Below(_) => EntryBound::Below(t.at(u)),
            })
            .collect();
        fspec.lower_bound(&bounds)
    };
    let mut pts = vec![a];
    pts.extend(geometric_grid(TABLE_POINTS, TABLE_MIN).into_iter().filter(|&g| g > a && g < b));
    pts.push(b);
    // running minimum keeps the interpolant non-increasing under oracle noise
    let mut vals: Vec<f64> = pts.iter().map(|&u| eval(u)).collect();
    for k in 1..vals.len() {
        vals[k] = vals[k].min(vals[k - 1]);
    }
    for k in 1..pts.len() {
        let (u0, u1) = (pts[k - 1], pts[k]);
        let slope = (vals[k] - vals[k - 1]) / (u1 - u0);
        segs.push(Segment { lo: u0, hi: u1, form: Form::Linear { intercept: vals[k - 1] - slope * u0, slope } });
    }
}

fn merge_constants(segs: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
    for s in segs {
        if let Some(last) = out.last_mut() {
            if let (Form::Const { c: c0 }, Form::Const { c: c1 }) = (last.form, s.form) {
                if c0 == c1 {
                    last.hi = s.hi;
                    continue;
                }
            }
        }
        out.push(s);
    }
    out
}

/// Lower-bound curve on `[rho, 1]` computable from the outcome alone.
pub fn curve_suffix_from_outcome(
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    outcome: &Outcome,
) -> Result<PiecewiseCurve> {
    let rep = DataVector::new(outcome.representative())?;
    let full = curve_from_data(fspec, scheme, &rep)?;
    let at_rho = fspec.lower_bound(outcome.entries());
    Ok(full.restrict(outcome.rho(), at_rho))
}
