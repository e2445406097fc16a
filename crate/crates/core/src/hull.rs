//! Convex lower hulls of lower-bound curves and the v-optimal estimates they induce.
//!
//! The hull is built right to left by gift wrapping from the anchor `(rho, M)`:
//! each step takes the flattest line from the current point that stays below
//! the curve (ties go to the smallest touching point). When that line is the
//! tangent of a convex arc at the current point, the hull follows the arc until
//! the tangent stops supporting the rest of the curve.

use serde::Serialize;

use crate::curve::{curve_from_data, Form, PiecewiseCurve};
use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::sampling::{DataVector, ThresholdScheme};

const ROOT_ITERS: usize = 200;
const ROOT_TOL: f64 = 1e-10;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HullPiece {
    /// Straight piece; `rate` is the negated slope.
    Linear { lo: f64, hi: f64, rate: f64 },
    /// The hull coincides with a convex arc of the curve.
    Arc { lo: f64, hi: f64, form: Form },
}

impl HullPiece {
    pub fn lo(&self) -> f64 {
        match *self {
            HullPiece::Linear { lo, .. } | HullPiece::Arc { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            HullPiece::Linear { hi, .. } | HullPiece::Arc { hi, .. } => hi,
        }
    }

    pub fn rate(&self, u: f64) -> f64 {
        match *self {
            HullPiece::Linear { rate, .. } => rate,
            HullPiece::Arc { form, .. } => -form.deriv(u),
        }
    }

    /// `∫ rate`, i.e. the drop of the hull across the piece.
    pub fn drop(&self) -> f64 {
        match *self {
            HullPiece::Linear { lo, hi, rate } => rate * (hi - lo),
            HullPiece::Arc { lo, hi, form } => form.value(lo) - form.value(hi),
        }
    }

    /// `∫ rate^2`.
    pub fn sq_integral(&self) -> f64 {
        match *self {
            HullPiece::Linear { lo, hi, rate } => rate * rate * (hi - lo),
            HullPiece::Arc { lo, hi, form } => form.sq_deriv_integral(lo, hi),
        }
    }
}

/// Lower hull on `(0, rho]` through the anchor `(rho, M)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hull {
    rho: f64,
    anchor_value: f64,
    /// Increasing in `u`, tiling `(0, rho]`.
    pieces: Vec<HullPiece>,
}

impl Hull {
    pub fn anchor(&self) -> (f64, f64) {
        (self.rho, self.anchor_value)
    }

    pub fn pieces(&self) -> &[HullPiece] {
        &self.pieces
    }

    fn piece_at(&self, u: f64) -> Option<&HullPiece> {
        if !(u > 0.0 && u <= self.rho) {
            return None;
        }
        let i = self.pieces.partition_point(|p| p.hi() < u);
        self.pieces.get(i)
    }

    /// Negated slope at `u ∈ (0, rho]`: the v-optimal estimate.
    pub fn rate(&self, u: f64) -> Option<f64> {
        self.piece_at(u).map(|p| p.rate(u))
    }

    /// Hull height `H(u)`.
    pub fn value(&self, u: f64) -> f64 {
        let mut h = self.anchor_value;
        for p in self.pieces.iter().rev() {
            if p.lo() >= u {
                h += p.drop();
            } else if p.hi() > u {
                let part = match *p {
                    HullPiece::Linear { hi, rate, .. } => rate * (hi - u),
                    HullPiece::Arc { hi, form, .. } => form.value(u) - form.value(hi),
                };
                h += part;
            }
        }
        h
    }

    /// `∫_0^rho rate(u)^2 du`, exact per piece.
    pub fn second_moment(&self) -> f64 {
        self.pieces.iter().map(HullPiece::sq_integral).sum()
    }

    /// `∫_0^rho rate(u) du`.
    pub fn mass(&self) -> f64 {
        self.pieces.iter().map(HullPiece::drop).sum()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(HullPiece::lo).collect()
    }

    /// Supremum of the rate, attained as `u -> 0+`.
    pub fn sup_rate(&self) -> f64 {
        match self.pieces.first() {
            Some(HullPiece::Linear { rate, .. }) => *rate,
            Some(HullPiece::Arc { lo, form, .. }) => -form.deriv(*lo),
            None => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Support {
    rate: f64,
    eta: f64,
    value: f64,
    /// Set when the best line is the tangent of a convex arc at the query point.
    arc: Option<Form>,
}

/// Flattest line from `(x, y)` to the closure of the curve on `[0, x)`.
fn support(curve: &PiecewiseCurve, x: f64, y: f64, allow_limit: bool) -> Option<Support> {
    let mut best: Option<Support> = None;
    let mut offer = |cand: Support| {
        let better = match best {
            None => true,
            Some(b) => {
                if close(cand.rate, b.rate) {
                    cand.eta < b.eta
                } else {
                    cand.rate < b.rate
                }
            }
        };
        if better {
            best = Some(cand);
        }
    };
    for s in curve.segments() {
        if s.lo >= x {
            break;
        }
        let g = s.form;
        let hi = s.hi.min(x);
        let at = |eta: f64| {
            let value = g.value(eta);
            Support { rate: (value - y) / (x - eta), eta, value, arc: None }
        };
        offer(at(s.lo));
        if hi < x {
            offer(at(hi));
        } else if allow_limit && close(g.value(x), y) {
            let arc = g.is_curved_convex().then_some(g);
            offer(Support { rate: -g.deriv(x), eta: x, value: y, arc });
        }
        if g.is_curved_convex() {
            let psi = |eta: f64| g.value(eta) - y + g.deriv(eta) * (x - eta);
            let (mut a, mut b) = (s.lo, hi);
            if psi(a) < 0.0 && psi(b) > 0.0 {
                for _ in 0..ROOT_ITERS {
                    let m = 0.5 * (a + b);
                    if psi(m) > 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                    if b - a <= ROOT_TOL * 1e-5 * b.max(1e-300) {
                        break;
                    }
                }
                if b < x {
                    offer(at(b));
                }
            }
        }
    }
    best
}

/// Leftmost point of `[lo, x]` from which the arc's tangent still supports the curve.
fn arc_end(curve: &PiecewiseCurve, form: Form, lo: f64, x: f64) -> f64 {
    let supports = |eta: f64| match support(curve, eta, form.value(eta), false) {
        None => true,
        Some(s) => s.rate >= -form.deriv(eta) - 1e-12 * s.rate.abs().max(1.0),
    };
    if supports(lo) {
        return lo;
    }
    let (mut a, mut b) = (lo, x);
    for _ in 0..ROOT_ITERS {
        let m = 0.5 * (a + b);
        if supports(m) {
            b = m;
        } else {
            a = m;
        }
        if b - a <= ROOT_TOL * 1e-5 * b.max(1e-300) {
            break;
        }
    }
    b
}

/// Lower hull of `curve` on `(0, rho]` together with the point `(rho, m)`.
pub fn lower_hull(curve: &PiecewiseCurve, rho: f64, m: f64) -> Result<Hull> {
    if curve.start() != 0.0 {
        return Err(Error::InvalidValue("hull needs a curve starting at 0".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidValue(format!("anchor {rho} outside (0, 1]")));
    }
    let bound = curve.eval(rho);
    if m < 0.0 || m > bound + 1e-12 * bound.max(1.0) {
        return Err(Error::AnchorOutOfRange { rho, m, bound });
    }
    let (mut x, mut y) = (rho, m);
    let mut pieces = Vec::new();
    let mut steps = 0usize;
    while x > 0.0 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::InvalidValue("hull construction did not terminate".into()));
        }
        let mut s = support(curve, x, y, true).expect("the curve has a point at 0");
        if let Some(form) = s.arc {
            let seg_lo = curve
                .segments()
                .iter()
                .find(|seg| seg.lo < x && seg.hi >= x)
                .map_or(0.0, |seg| seg.lo);
            let end = arc_end(curve, form, seg_lo, x);
            if end < x && !close(end, x) {
                pieces.push(HullPiece::Arc { lo: end, hi: x, form });
                x = end;
                y = form.value(end);
                continue;
            }
            s = support(curve, x, y, false).expect("the curve has a point at 0");
        }
        pieces.push(HullPiece::Linear { lo: s.eta, hi: x, rate: s.rate.max(0.0) });
        x = s.eta;
        y = s.value;
    }
    pieces.reverse();
    Ok(Hull { rho, anchor_value: m, pieces })
}

/// `inf_{eta < rho} (curve(eta) - m) / (rho - eta)`: the v-optimal estimate at
/// `rho` given that the estimates above `rho` integrate to `m`.
pub fn lambda_value(curve: &PiecewiseCurve, rho: f64, m: f64) -> Result<f64> {
    let bound = curve.eval(rho);
    if m > bound + 1e-12 * bound.max(1.0) {
        return Err(Error::AnchorOutOfRange { rho, m, bound });
    }
    Ok(lambda_unchecked(curve, rho, m))
}

/// As [`lambda_value`] without the anchor check; used with limit vectors whose
/// curve at `rho` itself is not meaningful.
pub(crate) fn lambda_unchecked(curve: &PiecewiseCurve, rho: f64, m: f64) -> f64 {
    support(curve, rho, m, true).map_or(f64::INFINITY, |s| s.rate)
}

/// The v-optimal estimator of `v`: the hull of its curve anchored at `(1, 0)`.
pub fn v_optimal(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<Hull> {
    let curve = curve_from_data(fspec, scheme, v)?;
    let value = fspec.value(v.entries())?;
    if !close(curve.at_start(), value) {
        return Err(Error::NotEstimable { limit: curve.at_start(), value });
    }
    lower_hull(&curve, 1.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Segment;

    fn curve(segs: Vec<(f64, f64, Form)>) -> PiecewiseCurve {
        let segs: Vec<Segment> = segs.into_iter().map(|(lo, hi, form)| Segment { lo, hi, form }).collect();
        let at = segs[0].at_lo();
        PiecewiseCurve::new(0.0, at, segs).unwrap()
    }

    #[test]
    fn concave_then_zero_is_one_line() {
        let c = curve(vec![
            (0.0, 0.2, Form::Const { c: 0.4 }),
            (0.2, 0.6, Form::Linear { intercept: 0.6, slope: -1.0 }),
            (0.6, 1.0, Form::Const { c: 0.0 }),
        ]);
        let h = lower_hull(&c, 1.0, 0.0).unwrap();
        assert!((h.rate(0.3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.rate(0.01).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(h.rate(0.8).unwrap(), 0.0);
        assert!((h.value(0.0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn convex_curve_is_its_own_hull() {
        let c = curve(vec![(0.0, 1.0, Form::TightArc { p: 0.3 })]);
        let h = lower_hull(&c, 1.0, 0.0).unwrap();
        for &u in &[1e-4, 0.1, 0.5, 0.99] {
            assert!((h.rate(u).unwrap() - u.powf(-0.3)).abs() < 1e-9 * u.powf(-0.3));
        }
    }

    #[test]
    fn step_curve_two_point_hull() {
        let c = curve(vec![
            (0.0, 0.25, Form::Const { c: 2.0 }),
            (0.25, 0.5, Form::Const { c: 1.0 }),
            (0.5, 1.0, Form::Const { c: 0.0 }),
        ]);
        let h = lower_hull(&c, 1.0, 0.0).unwrap();
        assert!((h.rate(0.1).unwrap() - 4.0).abs() < 1e-12);
        assert!((h.rate(0.4).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(h.rate(0.7).unwrap(), 0.0);
    }

    #[test]
    fn anchor_above_curve_is_rejected() {
        let c = curve(vec![(0.0, 1.0, Form::Const { c: 1.0 })]);
        assert!(matches!(lower_hull(&c, 0.5, 1.5), Err(Error::AnchorOutOfRange { .. })));
    }
}
