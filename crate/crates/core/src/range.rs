//! The optimal range of an estimate at seed `rho`, and existence checks for
//! unbiased nonnegative estimators.

use serde::Serialize;

use crate::curve::{curve_from_data, curve_suffix_from_outcome, pattern_form};
use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::hull::{lambda_unchecked, lower_hull};
use crate::sampling::{sample_vector, DataVector, EntryBound, Outcome, Seed, ThresholdScheme};

/// Cap on the number of unsampled entries enumerated for range extremes.
const MAX_FREE_ENTRIES: usize = 12;

/// `[lambda_l, lambda_u]`: the estimates at `rho` compatible with
/// nonnegativity, unbiasedness and the estimates already fixed above `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalRange {
    pub lambda_l: f64,
    pub lambda_u: f64,
}

impl OptimalRange {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lambda_l - tol && x <= self.lambda_u + tol
    }
}

/// Vectors whose curves attain the supremum in the upper end of the range.
pub(crate) fn extremal_candidates(fspec: &FunctionSpec, outcome: &Outcome) -> Result<Vec<Vec<f64>>> {
    let e = outcome.entries();
    if outcome.is_fully_sampled() {
        return Ok(vec![outcome.representative()]);
    }
    match fspec {
        FunctionSpec::RgPPlus { .. } | FunctionSpec::TightFamily { .. } => Ok(vec![outcome.representative()]),
        FunctionSpec::RgP { .. } => {
            let free: Vec<usize> = (0..e.len()).filter(|&i| e[i].exact().is_none()).collect();
            if free.len() > MAX_FREE_ENTRIES {
                return Err(Error::Unsupported(format!("{} unsampled entries", free.len())));
            }
            let base = outcome.representative();
            let mut out = Vec::with_capacity(1 << free.len());
            for mask in 0..(1usize << free.len()) {
                let mut z = base.clone();
                let mut ok = true;
                for (bit, &i) in free.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        match e[i] {
                            EntryBound::Below(t) if t.is_finite() => z[i] = t,
                            _ => ok = false,
                        }
                    }
                }
                if ok {
                    out.push(z);
                }
            }
            Ok(out)
        }
        FunctionSpec::Custom(c) => c
            .extremal_vectors(e)
            .ok_or_else(|| Error::Unsupported(format!("{} has no extremal-vector oracle", c.name()))),
    }
}

/// Slack, relative to `max(1, bound)`, within which the mass above `rho`
/// counts as equal to the lower bound at `rho`.
pub(crate) const ON_BOUND_SLACK: f64 = 1e-12;

/// Upper limit on the range set by the outcome's own pattern just below `rho`.
///
/// Limit candidates put an unsampled entry exactly at its bound, which makes
/// it sampled at every seed below `rho`. A consistent vector close to that
/// limit stays unsampled on a short interval below `rho`, where the lower
/// bound follows the outcome's pattern `g`. When the mass already equals
/// `g(rho)`, that interval caps the range at `-g'(rho-)`; otherwise it
/// imposes nothing.
pub(crate) fn pattern_cap(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome, m: f64) -> f64 {
    let rho = outcome.rho();
    let g = |eta: f64| {
        let entries: Vec<EntryBound> = outcome
            .entries()
            .iter()
            .zip(scheme.entries())
            .map(|(e, t)| match e {
                EntryBound::Exact(x) => EntryBound::Exact(*x),
                EntryBound::Below(_) => EntryBound::Below(t.at(eta)),
            })
            .collect();
        fspec.lower_bound(&entries)
    };
    let at = g(rho);
    if at - m > ON_BOUND_SLACK * at.max(1.0) {
        return f64::INFINITY;
    }
    if let Some(form) = pattern_form(fspec, scheme, outcome) {
        return (-form.deriv(rho)).max(0.0);
    }
    let h = 1e-4 * rho;
    let d = |h: f64| (g(rho - h) - at) / h;
    (2.0 * d(0.5 * h) - d(h)).max(0.0)
}

/// The optimal range at the outcome's seed given `m`, the integral of the
/// estimates over `(rho, 1]`.
pub fn lambda_bounds(
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    outcome: &Outcome,
    m: f64,
) -> Result<OptimalRange> {
    let rho = outcome.rho();
    let suffix = curve_suffix_from_outcome(fspec, scheme, outcome)?;
    let bound = suffix.eval(rho);
    if m > bound + 1e-12 * bound.max(1.0) {
        return Err(Error::AnchorOutOfRange { rho, m, bound });
    }
    let lambda_l = ((bound - m) / rho).max(0.0);
    let mut lambda_u = lambda_l;
    for z in extremal_candidates(fspec, outcome)? {
        let curve = curve_from_data(fspec, scheme, &DataVector::new(z)?)?;
        lambda_u = lambda_u.max(lambda_unchecked(&curve, rho, m));
    }
    lambda_u = lambda_u.min(pattern_cap(fspec, scheme, outcome, m)).max(lambda_l);
    if !lambda_u.is_finite() {
        return Err(Error::UnboundedRange { rho });
    }
    Ok(OptimalRange { lambda_l, lambda_u })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

impl From<bool> for Tri {
    fn from(b: bool) -> Self {
        if b {
            Tri::Yes
        } else {
            Tri::No
        }
    }
}

/// Whether `v` admits an unbiased nonnegative estimator, one with finite
/// variance, and one that is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Existence {
    pub unbiased: Tri,
    pub finite_variance: Tri,
    pub bounded: Tri,
}

pub fn existence_checks(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector) -> Result<Existence> {
    let value = fspec.value(v.entries())?;
    if fspec.is_custom() {
        return probe_custom(fspec, scheme, v, value);
    }
    let curve = curve_from_data(fspec, scheme, v)?;
    let unbiased = (curve.at_start() - value).abs() <= 1e-12 * value.max(1.0);
    if !unbiased {
        return Ok(Existence { unbiased: Tri::No, finite_variance: Tri::No, bounded: Tri::No });
    }
    let hull = lower_hull(&curve, 1.0, 0.0)?;
    Ok(Existence {
        unbiased: Tri::Yes,
        finite_variance: hull.second_moment().is_finite().into(),
        bounded: hull.sup_rate().is_finite().into(),
    })
}

/// Oracle-only functions: probe the lower bound at `u = 2^-k` and extrapolate.
fn probe_custom(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &DataVector, value: f64) -> Result<Existence> {
    let lb = |k: i32| -> Result<f64> {
        let out = sample_vector(v, Seed::new(2f64.powi(-k))?, scheme)?;
        Ok(fspec.lower_bound(out.entries()))
    };
    let scale = value.abs().max(1.0);
    let gap = |k: i32| -> Result<f64> { Ok(value - lb(k)?) };

    let (g31, g32) = (gap(31)?, gap(32)?);
    let limit = 2.0 * g32 - g31;
    let unbiased = if limit.abs() <= 1e-9 * scale && g32 <= 1e-6 * scale {
        Tri::Yes
    } else if (g32 - g31).abs() <= 1e-9 * scale && g32 > 1e-6 * scale {
        Tri::No
    } else {
        Tri::Unknown
    };
    if unbiased == Tri::No {
        return Ok(Existence { unbiased, finite_variance: Tri::No, bounded: Tri::No });
    }

    // difference quotient at 0; declared divergent only on a 10x jump over two octaves
    let q = |k: i32| -> Result<f64> { Ok(gap(k)? * 2f64.powi(k)) };
    let (q26, q28, q29, q30) = (q(26)?, q(28)?, q(29)?, q(30)?);
    let bounded = if q30 > 10.0 * q28.max(1e-300) && q28 > 10.0 * q26.max(1e-300) {
        Tri::No
    } else if (q30 - q29).abs() <= 1e-3 * q30.abs().max(1.0) {
        Tri::Yes
    } else {
        Tri::Unknown
    };

    // per-octave contribution of the squared slope of the curve
    let octave = |k: i32| -> Result<f64> {
        let (a, b) = (2f64.powi(-k - 1), 2f64.powi(-k));
        let s = (lb(k + 1)? - lb(k)?) / (b - a);
        Ok(s * s * (b - a))
    };
    let c: Vec<f64> = (10..=30).map(octave).collect::<Result<_>>()?;
    let n = c.len();
    let tiny = 1e-15 * scale * scale;
    let finite_variance = if c[n - 3..].iter().all(|&x| x <= tiny)
        || c[n - 3..].windows(2).all(|w| w[1] <= 0.9 * w[0])
    {
        Tri::Yes
    } else if c[n - 1] > 10.0 * c[n - 3].max(tiny) {
        Tri::No
    } else {
        Tri::Unknown
    };
    Ok(Existence { unbiased, finite_variance, bounded })
}
