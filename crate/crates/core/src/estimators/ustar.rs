//! The U* estimator: at every seed, the upper end of the optimal range given
//! the estimates already fixed at larger seeds.
//!
//! Writing `M(x)` for the integral of the estimate over `(x, 1]`, U* solves
//! `M'(x) = -lambda_u(x, M(x))` from `M(1) = 0` downward. Only the range
//! exponent under unit-rate PPS has a closed form; everything else goes
//! through a trapezoid sweep over a geometric grid that is doubled until two
//! successive sweeps agree.

use std::collections::HashMap;

use crate::curve::{curve_from_data, PiecewiseCurve};
use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::hull::lambda_unchecked;
use crate::range::{extremal_candidates, pattern_cap};
use crate::sampling::{sample_vector, sort_dedup, DataVector, EntryBound, Outcome, Seed, ThresholdScheme};

/// Left end of the sweep grid; the grid is finer near 0 where seeds crowd.
pub const SWEEP_MIN: f64 = 1e-6;
/// Grid intervals of the first sweep.
pub const SWEEP_START: usize = 4096;
/// The sweep gives up past this many grid intervals.
pub const SWEEP_MAX: usize = 1 << 19;
/// Gap to the lower bound, per unit of step and rate, treated as zero.
const SNAP: f64 = 1e-5;
/// Agreement required between successive sweeps. Below `SWEEP_MIN` the rate
/// is a difference of nearly equal masses over a tiny seed, so disagreement
/// there is weighted by `x / SWEEP_MIN`.
pub const SWEEP_TOL: f64 = 1e-6;

pub fn ustar_estimate(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Result<f64> {
    fspec.validate()?;
    fspec.check_arity(outcome.arity())?;
    if let Some(x) = ustar_closed(fspec, scheme, outcome) {
        return Ok(x);
    }
    ustar_sweep(fspec, scheme, outcome)
}

/// Closed form for the range exponent on two entries with unit-rate PPS and
/// sampled values at most 1.
pub fn ustar_closed(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Option<f64> {
    let FunctionSpec::RgPPlus { p } = *fspec else {
        return None;
    };
    if !scheme.is_unit_pps() || outcome.representative().iter().any(|&x| x > 1.0) {
        return None;
    }
    let u = outcome.rho();
    Some(match outcome.entries()[..] {
        [EntryBound::Below(_), _] => 0.0,
        [EntryBound::Exact(v1), EntryBound::Below(_)] => {
            if p >= 1.0 {
                p * (v1 - u).max(0.0).powf(p - 1.0)
            } else {
                v1.powf(p - 1.0)
            }
        }
        [EntryBound::Exact(v1), EntryBound::Exact(v2)] => {
            if v1 <= v2 || p >= 1.0 {
                0.0
            } else {
                ((v1 - v2).powf(p) - v1.powf(p - 1.0) * (v1 - v2)) / v2
            }
        }
        _ => return None,
    })
}

/// Curves of candidate vectors, keyed by bit pattern.
type CurveCache = HashMap<Vec<u64>, PiecewiseCurve>;

struct Sweeper<'a> {
    fspec: &'a FunctionSpec,
    scheme: &'a ThresholdScheme,
    rep: Vec<f64>,
    cache: CurveCache,
}

impl Sweeper<'_> {
    /// Outcome with the given sampled pattern and the bounds in force at `x`.
    fn outcome_at(&self, x: f64, sampled: &[bool]) -> Result<Outcome> {
        let entries = self
            .scheme
            .entries()
            .iter()
            .zip(&self.rep)
            .zip(sampled)
            .map(|((t, &v), &s)| if s { EntryBound::Exact(v) } else { EntryBound::Below(t.at(x)) })
            .collect();
        Ok(Outcome::from_parts(Seed::new(x)?, entries))
    }

    fn upper(&mut self, outcome: &Outcome, m: f64) -> Result<f64> {
        let rho = outcome.rho();
        // the mass above rho never exceeds the lower bound at rho; clamping keeps
        // trapezoid drift from leaving the feasible region
        let m = m.min(self.fspec.lower_bound(outcome.entries()));
        let mut best = 0.0f64;
        for z in extremal_candidates(self.fspec, outcome)? {
            let key: Vec<u64> = z.iter().map(|x| x.to_bits()).collect();
            if !self.cache.contains_key(&key) {
                let c = curve_from_data(self.fspec, self.scheme, &DataVector::new(z)?)?;
                self.cache.insert(key.clone(), c);
            }
            best = best.max(lambda_unchecked(&self.cache[&key], rho, m));
        }
        best = best.min(pattern_cap(self.fspec, self.scheme, outcome, m));
        if !best.is_finite() {
            return Err(Error::UnboundedRange { rho });
        }
        Ok(best)
    }

    /// One sweep with `n` grid intervals between `min(SWEEP_MIN, rho)` and 1.
    /// `marks` are extra seeds above `rho` where the rate and mass are recorded.
    fn sweep(&mut self, outcome: &Outcome, n: usize, marks: &[f64]) -> Result<SweepOut> {
        let rho = outcome.rho();
        let stride = n / SWEEP_START;
        let mut cuts: Vec<f64> = self.scheme.breakpoints(&self.rep);
        cuts.extend(marks);
        // kinks of the lower-bound curve move the limit candidates
        cuts.extend(curve_from_data(self.fspec, self.scheme, &DataVector::new(self.rep.clone())?)?.breakpoints());
        cuts.retain(|&b| b > rho && b < 1.0);
        sort_dedup(&mut cuts);
        let mut edges = vec![1.0];
        edges.extend(cuts.iter().rev());
        edges.push(rho);

        let span = SWEEP_MIN.min(rho).ln();
        let grid: Vec<(f64, bool)> = (0..=n)
            .rev()
            .map(|k| ((span * (1.0 - k as f64 / n as f64)).exp(), k % stride == 0))
            .collect();
        let mut idx = 0;
        let mut out = SweepOut { estimate: 0.0, mass: 0.0, sq_mass: 0.0, coarse: Vec::new(), marks: Vec::new() };
        let mut m = 0.0;
        for w in edges.windows(2) {
            let (b, a) = (w[0], w[1]);
            let probe = Seed::new(0.5 * (a + b))?;
            let rep = DataVector::new(self.rep.clone())?;
            let sampled: Vec<bool> = sample_vector(&rep, probe, self.scheme)?
                .entries()
                .iter()
                .map(|e| e.exact().is_some())
                .collect();
            let mut pts = vec![(b, true)];
            while idx < grid.len() && grid[idx].0 >= b {
                idx += 1;
            }
            while idx < grid.len() && grid[idx].0 > a {
                pts.push(grid[idx]);
                idx += 1;
            }
            // the rate at `a` itself belongs to the interval below; step into this one
            let inner = a + 1e-9 * (b - a);
            pts.push((a, true));
            let mut f_prev = self.upper(&self.outcome_at(b, &sampled)?, m)?;
            out.coarse.push((b, f_prev));
            if b < 1.0 {
                out.marks.push(Mark { seed: b, rate: f_prev, mass: m });
            }
            for pair in pts.windows(2) {
                let ((x0, _), (x1, keep)) = (pair[0], pair[1]);
                let h = x0 - x1;
                let at = self.outcome_at(if x1 == a { inner } else { x1 }, &sampled)?;
                let cap = self.fspec.lower_bound(self.outcome_at(x1, &sampled)?.entries());
                let guess = (m + h * f_prev).min(cap);
                let f_guess = self.upper(&at, guess)?;
                m = (m + 0.5 * h * (f_prev + f_guess)).min(cap);
                // trapezoid drift off the bound is O(h^3); near a convex bound the
                // range moves like the square root of the gap, so snap back onto it
                if cap - m <= SNAP * h * f_prev.max(f_guess).max(1.0) {
                    m = cap;
                }
                let f_next = self.upper(&at, m)?;
                out.sq_mass += 0.5 * h * (f_prev * f_prev + f_next * f_next);
                f_prev = f_next;
                if keep {
                    out.coarse.push((x1, f_prev));
                }
            }
        }
        out.mass = m;
        out.estimate = self.upper(outcome, m)?;
        Ok(out)
    }

    /// Doubles the grid until two sweeps agree.
    fn converge(&mut self, outcome: &Outcome, marks: &[f64]) -> Result<SweepOut> {
        let mut n = SWEEP_START;
        let mut prev = self.sweep(outcome, n, marks)?;
        loop {
            n *= 2;
            let next = self.sweep(outcome, n, marks)?;
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
            let change = prev
                .coarse
                .iter()
                .zip(&next.coarse)
                .map(|(a, b)| rel(a.1, b.1) * (a.0 / SWEEP_MIN).min(1.0))
                .fold(rel(prev.estimate, next.estimate) * (outcome.rho() / SWEEP_MIN).min(1.0), f64::max);
            if change < SWEEP_TOL {
                return Ok(next);
            }
            if n >= SWEEP_MAX {
                return Err(Error::NoConvergence { change, points: n });
            }
            prev = next;
        }
    }
}

/// Rate and mass above a recorded seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mark {
    pub seed: f64,
    pub rate: f64,
    /// Integral of the estimate over `(seed, 1]`.
    pub mass: f64,
}

struct SweepOut {
    estimate: f64,
    mass: f64,
    sq_mass: f64,
    coarse: Vec<(f64, f64)>,
    marks: Vec<Mark>,
}

/// Numerical U* by grid doubling.
pub fn ustar_sweep(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Result<f64> {
    let mut sw = Sweeper { fspec, scheme, rep: outcome.representative(), cache: HashMap::new() };
    Ok(sw.converge(outcome, &[])?.estimate.max(0.0))
}

/// U* along the outcomes of one data vector, from seed 1 down to `floor`.
#[derive(Clone, Debug, PartialEq)]
pub struct UstarPath {
    pub floor: f64,
    pub rate_at_floor: f64,
    /// `∫_floor^1 U*`.
    pub mass: f64,
    /// `∫_floor^1 U*^2`.
    pub sq_mass: f64,
    /// One entry per requested seed, in decreasing seed order.
    pub marks: Vec<Mark>,
}

pub fn ustar_path(
    fspec: &FunctionSpec,
    scheme: &ThresholdScheme,
    v: &DataVector,
    floor: f64,
    marks: &[f64],
) -> Result<UstarPath> {
    fspec.validate()?;
    fspec.check_arity(v.arity())?;
    let outcome = sample_vector(v, Seed::new(floor)?, scheme)?;
    let mut sw = Sweeper { fspec, scheme, rep: v.entries().to_vec(), cache: HashMap::new() };
    let out = sw.converge(&outcome, marks)?;
    let wanted: Vec<Mark> = out
        .marks
        .iter()
        .copied()
        .filter(|mk| marks.contains(&mk.seed))
        .collect();
    Ok(UstarPath { floor, rate_at_floor: out.estimate, mass: out.mass, sq_mass: out.sq_mass, marks: wanted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(v: [f64; 2], u: f64) -> Outcome {
        let s = ThresholdScheme::unit_pps(2);
        sample_vector(&DataVector::new(v.to_vec()).unwrap(), Seed::new(u).unwrap(), &s).unwrap()
    }

    #[test]
    fn closed_form_unit_exponent() {
        let f = FunctionSpec::RgPPlus { p: 1.0 };
        let s = ThresholdScheme::unit_pps(2);
        assert_eq!(ustar_closed(&f, &s, &outcome([0.6, 0.2], 0.4)), Some(1.0));
        assert_eq!(ustar_closed(&f, &s, &outcome([0.6, 0.2], 0.1)), Some(0.0));
        assert_eq!(ustar_closed(&f, &s, &outcome([0.6, 0.2], 0.7)), Some(0.0));
    }

    #[test]
    fn sweep_matches_closed_form() {
        for &p in &[0.5, 1.0, 2.0] {
            let f = FunctionSpec::RgPPlus { p };
            let s = ThresholdScheme::unit_pps(2);
            for &u in &[0.1, 0.3, 0.5] {
                let o = outcome([0.6, 0.2], u);
                let want = ustar_closed(&f, &s, &o).unwrap();
                let got = ustar_sweep(&f, &s, &o).unwrap();
                assert!((got - want).abs() < 1e-5, "p={p} u={u}: {got} vs {want}");
            }
        }
    }
}
