//! The L* estimator: `f(rho)/rho - ∫_rho^1 f(u)/u^2 du` on the outcome's lower-bound curve.

use crate::curve::{curve_from_data, curve_suffix_from_outcome, PiecewiseCurve};
use crate::error::Result;
use crate::functions::FunctionSpec;
use crate::quad::{adaptive_simpson, ABS_TOL};
use crate::sampling::{DataVector, Outcome, ThresholdScheme};

pub fn lstar_estimate(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Result<f64> {
    let suffix = curve_suffix_from_outcome(fspec, scheme, outcome)?;
    let x = if fspec.is_custom() {
        lstar_quadrature(&suffix, outcome.rho())
    } else {
        lstar_closed(&suffix, outcome.rho())
    };
    Ok(x.max(0.0))
}

/// Closed form after integrating by parts segment by segment:
/// jumps of the curve weighted by `1/u`, plus `-∫ g'(u)/u` on each piece.
/// Every term is nonnegative, so nothing cancels.
pub fn lstar_closed(suffix: &PiecewiseCurve, rho: f64) -> f64 {
    let segs = suffix.segments();
    let Some(first) = segs.first() else {
        return suffix.at_start() / rho;
    };
    let mut total = (suffix.at_start() - first.at_lo()) / rho;
    for w in segs.windows(2) {
        total += (w[0].at_hi() - w[1].at_lo()) / w[1].lo;
    }
    total += segs.last().unwrap().at_hi();
    for s in segs {
        total += s.form.neg_deriv_over_u_integral(s.lo, s.hi);
    }
    total
}

/// Direct evaluation of the defining integral by adaptive quadrature.
pub fn lstar_quadrature(suffix: &PiecewiseCurve, rho: f64) -> f64 {
    let mut integral = 0.0;
    let segs = suffix.segments();
    let tol = ABS_TOL / segs.len().max(1) as f64;
    for s in segs {
        integral += adaptive_simpson(|u| s.form.value(u) / (u * u), s.lo, s.hi, tol).value;
    }
    suffix.at_start() / rho - integral
}

/// L* along the outcomes of one data vector. Above any seed the outcomes of
/// `v` and of the outcome's representative coincide, so one curve serves all
/// seeds; per segment the tail of the closed form is precomputed.
#[derive(Clone, Debug)]
pub struct LstarPath {
    curve: PiecewiseCurve,
    /// Closed-form contribution of everything above each segment's right end.
    tails: Vec<f64>,
}

impl LstarPath {
    pub fn new(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<Self> {
        let curve = curve_from_data(fspec, scheme, v)?;
        let segs = curve.segments();
        let mut tails = vec![0.0; segs.len()];
        let mut acc = segs.last().map_or(0.0, |s| s.at_hi());
        for k in (0..segs.len()).rev() {
            if k + 1 < segs.len() {
                let next = &segs[k + 1];
                acc += next.form.neg_deriv_over_u_integral(next.lo, next.hi);
                acc += (segs[k].at_hi() - next.at_lo()) / next.lo;
            }
            tails[k] = acc;
        }
        Ok(Self { curve, tails })
    }

    pub fn curve(&self) -> &PiecewiseCurve {
        &self.curve
    }

    /// The L* estimate at seed `u ∈ (0, 1]`.
    pub fn rate(&self, u: f64) -> f64 {
        let segs = self.curve.segments();
        let k = segs.partition_point(|s| s.hi < u).min(segs.len() - 1);
        let s = &segs[k];
        (s.form.neg_deriv_over_u_integral(u, s.hi) + self.tails[k]).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{EntryBound, Seed};

    #[test]
    fn rg_plus_log_form() {
        let f = FunctionSpec::RgPPlus { p: 1.0 };
        let s = ThresholdScheme::unit_pps(2);
        let u = 0.3;
        let o = Outcome::from_parts(Seed::new(u).unwrap(), vec![EntryBound::Exact(0.6), EntryBound::Below(u)]);
        let x = lstar_estimate(&f, &s, &o).unwrap();
        assert!((x - (0.6f64 / u).ln()).abs() < 1e-13);
    }

    #[test]
    fn routes_agree_on_power_curve() {
        let f = FunctionSpec::RgPPlus { p: 2.5 };
        let s = ThresholdScheme::unit_pps(2);
        let o = Outcome::from_parts(Seed::new(0.1).unwrap(), vec![EntryBound::Exact(0.8), EntryBound::Below(0.1)]);
        let c = curve_suffix_from_outcome(&f, &s, &o).unwrap();
        assert!((lstar_closed(&c, 0.1) - lstar_quadrature(&c, 0.1)).abs() < 1e-8);
    }

    #[test]
    fn path_matches_per_outcome_estimates() {
        let f = FunctionSpec::RgPPlus { p: 2.0 };
        let s = ThresholdScheme::unit_pps(2);
        let v = DataVector::new(vec![0.7, 0.3]).unwrap();
        let path = LstarPath::new(&f, &s, &v).unwrap();
        for &u in &[0.05, 0.3, 0.31, 0.5, 0.7, 0.9] {
            let o = crate::sampling::sample_vector(&v, Seed::new(u).unwrap(), &s).unwrap();
            let direct = lstar_estimate(&f, &s, &o).unwrap();
            assert!((path.rate(u) - direct).abs() < 1e-12, "u={u}");
        }
    }
}
