//! Horvitz-Thompson: `f(v)/p` when the outcome reveals `f(v)`, where `p` is
//! the probability over the seed that it does.

use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::sampling::{Outcome, ThresholdScheme};

/// Probability that the outcome of `v` determines `f(v)`.
pub fn reveal_probability(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &[f64]) -> Result<f64> {
    let cross = |i: usize| -> Result<f64> { Ok(scheme.entry(i)?.crossing_seed(v[i])) };
    let p = match fspec {
        FunctionSpec::RgPPlus { .. } => cross(0)?.min(cross(1)?),
        FunctionSpec::RgP { .. } | FunctionSpec::TightFamily { .. } => {
            (0..v.len()).map(cross).collect::<Result<Vec<f64>>>()?.into_iter().fold(1.0, f64::min)
        }
        FunctionSpec::Custom(c) => c
            .reveal_probability(scheme, v)
            .ok_or_else(|| Error::Unsupported(format!("{} has no reveal-probability oracle", c.name())))?,
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Reveal probability of `v`, or an error when `f(v) > 0` is never revealed.
pub fn ht_applicable(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &[f64]) -> Result<f64> {
    let value = fspec.value(v)?;
    let p = reveal_probability(fspec, scheme, v)?;
    if value > 0.0 && p == 0.0 {
        return Err(Error::ZeroRevealProbability { value });
    }
    Ok(p)
}

pub fn ht_estimate(fspec: &FunctionSpec, scheme: &ThresholdScheme, outcome: &Outcome) -> Result<f64> {
    let Some(value) = fspec.determined_value(outcome.entries()) else {
        return Ok(0.0);
    };
    if value == 0.0 {
        return Ok(0.0);
    }
    let p = reveal_probability(fspec, scheme, &outcome.representative())?;
    if p == 0.0 {
        return Err(Error::ZeroRevealProbability { value });
    }
    Ok(value / p)
}
