//! Item functions and their pointwise lower bounds over consistent sets.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::{EntryBound, ThresholdScheme};

/// A user-supplied item function.
///
/// `infimum` is the only required oracle for lower-bound curves and L*.
/// U* needs `extremal_vectors`; Horvitz-Thompson needs `determined_value`
/// and `reveal_probability`.
pub trait CustomFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Required arity, if fixed.
    fn arity(&self) -> Option<usize>;

    fn value(&self, v: &[f64]) -> f64;

    /// Infimum of the function over the product of the per-entry sets. A
    /// `Below(0)` bound must be treated as the limit point 0.
    fn infimum(&self, bounds: &[EntryBound]) -> f64;

    /// Finitely many consistent vectors (limit points allowed) that realize the
    /// supremum of the optimal-range ratio.
    fn extremal_vectors(&self, _bounds: &[EntryBound]) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// The function value when the bounds pin it down.
    fn determined_value(&self, _bounds: &[EntryBound]) -> Option<f64> {
        None
    }

    /// Probability over the seed that the outcome of `v` pins the value down.
    fn reveal_probability(&self, _scheme: &ThresholdScheme, _v: &[f64]) -> Option<f64> {
        None
    }

    /// Declared: the supremum of lower bounds over a consistent set is attained
    /// at vectors maximizing the function. Not verified.
    fn upper_condition(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub enum FunctionSpec {
    /// `(max(v) - min(v))^p` over all entries.
    RgP { p: f64 },
    /// `max(0, v1 - v2)^p` on two entries.
    RgPPlus { p: f64 },
    /// `(1 - v^(1-p)) / (1 - p)` on `[0, 1]`, sampled with `tau(u) = u`.
    TightFamily { p: f64 },
    Custom(Arc<dyn CustomFunction>),
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::RgP { p } => write!(f, "rg_{p}"),
            FunctionSpec::RgPPlus { p } => write!(f, "rg_{p}+"),
            FunctionSpec::TightFamily { p } => write!(f, "tight({p})"),
            FunctionSpec::Custom(c) => write!(f, "{}", c.name()),
        }
    }
}

impl FunctionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionSpec::RgP { p } | FunctionSpec::RgPPlus { p } if !(p > 0.0 && p.is_finite()) => {
                Err(Error::InvalidValue(format!("range exponent must be positive, got {p}")))
            }
            FunctionSpec::TightFamily { p } if !(0.0..0.5).contains(&p) => {
                Err(Error::InvalidValue(format!("tight family needs p in [0, 0.5), got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn arity(&self) -> Option<usize> {
        match self {
            FunctionSpec::RgP { .. } => None,
            FunctionSpec::RgPPlus { .. } => Some(2),
            FunctionSpec::TightFamily { .. } => Some(1),
            FunctionSpec::Custom(c) => c.arity(),
        }
    }

    pub fn check_arity(&self, r: usize) -> Result<()> {
        match self.arity() {
            Some(a) if a != r => Err(Error::ArityMismatch { expected: a, got: r }),
            _ => Ok(()),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, FunctionSpec::Custom(_))
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        self.validate()?;
        self.check_arity(v.len())?;
        Ok(match self {
            FunctionSpec::RgP { p } => {
                let (lo, hi) = min_max(v);
                (hi - lo).powf(*p)
            }
            FunctionSpec::RgPPlus { p } => (v[0] - v[1]).max(0.0).powf(*p),
            FunctionSpec::TightFamily { p } => {
                if !(0.0..=1.0).contains(&v[0]) {
                    return Err(Error::InvalidValue(format!("tight family domain is [0,1], got {}", v[0])));
                }
                tight_value(*p, v[0])
            }
            FunctionSpec::Custom(c) => c.value(v),
        })
    }

    /// Infimum of the function over the consistent set `bounds`.
    pub fn lower_bound(&self, bounds: &[EntryBound]) -> f64 {
        match self {
            FunctionSpec::RgPPlus { p } => match (bounds[0], bounds[1]) {
                (EntryBound::Below(_), _) => 0.0,
                (EntryBound::Exact(a), EntryBound::Exact(b)) => (a - b).max(0.0).powf(*p),
                (EntryBound::Exact(a), EntryBound::Below(t)) => (a - t).max(0.0).powf(*p),
            },
            FunctionSpec::RgP { p } => {
                let exact: Vec<f64> = bounds.iter().filter_map(|b| b.exact()).collect();
                if exact.is_empty() {
                    return 0.0;
                }
                let (lo, hi) = min_max(&exact);
                let floor = bounds
                    .iter()
                    .filter_map(|b| match b {
                        EntryBound::Below(t) => Some(*t),
                        EntryBound::Exact(_) => None,
                    })
                    .fold(lo, f64::min);
                (hi - floor).powf(*p)
            }
            FunctionSpec::TightFamily { p } => match bounds[0] {
                EntryBound::Exact(x) => tight_value(*p, x),
                EntryBound::Below(t) => tight_value(*p, t.min(1.0)),
            },
            FunctionSpec::Custom(c) => c.infimum(bounds),
        }
    }

    /// The value when the outcome reveals it.
    pub fn determined_value(&self, bounds: &[EntryBound]) -> Option<f64> {
        match self {
            FunctionSpec::RgP { .. } | FunctionSpec::RgPPlus { .. } | FunctionSpec::TightFamily { .. } => {
                let v: Option<Vec<f64>> = bounds.iter().map(|b| b.exact()).collect();
                v.and_then(|v| self.value(&v).ok())
            }
            FunctionSpec::Custom(c) => c.determined_value(bounds),
        }
    }

    /// Whether U* is order-optimal for the order preferring larger values.
    pub fn upper_condition(&self) -> bool {
        match self {
            FunctionSpec::RgP { .. } | FunctionSpec::RgPPlus { .. } => true,
            FunctionSpec::TightFamily { .. } => false,
            FunctionSpec::Custom(c) => c.upper_condition(),
        }
    }
}

pub(crate) fn tight_value(p: f64, x: f64) -> f64 {
    (1.0 - x.powf(1.0 - p)) / (1.0 - p)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `|Σ c_i v_i|^p`, e.g. `|v1 - 2 v2 + v3|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsLinearPower {
    pub coeffs: Vec<f64>,
    pub p: f64,
}

impl AbsLinearPower {
    fn span(&self, bounds: &[EntryBound]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (c, b) in self.coeffs.iter().zip(bounds) {
            match *b {
                EntryBound::Exact(x) => {
                    lo += c * x;
                    hi += c * x;
                }
                EntryBound::Below(t) => {
                    let end = c * t;
                    lo += end.min(0.0);
                    hi += end.max(0.0);
                }
            }
        }
        (lo, hi)
    }
}

impl CustomFunction for AbsLinearPower {
    fn name(&self) -> String {
        format!("abs_linear({:?})^{}", self.coeffs, self.p)
    }

    fn arity(&self) -> Option<usize> {
        Some(self.coeffs.len())
    }

    fn value(&self, v: &[f64]) -> f64 {
        let s: f64 = self.coeffs.iter().zip(v).map(|(c, x)| c * x).sum();
        s.abs().powf(self.p)
    }

    fn infimum(&self, bounds: &[EntryBound]) -> f64 {
        let (lo, hi) = self.span(bounds);
        if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            lo.abs().min(hi.abs()).powf(self.p)
        }
    }

    fn extremal_vectors(&self, bounds: &[EntryBound]) -> Option<Vec<Vec<f64>>> {
        let free: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].exact().is_none()).collect();
        if free.len() > 12 {
            return None;
        }
        let base: Vec<f64> = bounds.iter().map(|b| b.exact().unwrap_or(0.0)).collect();
        let mut out = Vec::with_capacity(1 << free.len());
        for mask in 0..(1usize << free.len()) {
            let mut z = base.clone();
            for (bit, &i) in free.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    if let EntryBound::Below(t) = bounds[i] {
                        z[i] = t;
                    }
                }
            }
            out.push(z);
        }
        Some(out)
    }

    fn determined_value(&self, bounds: &[EntryBound]) -> Option<f64> {
        let needed = self.coeffs.iter().zip(bounds).filter(|(c, _)| **c != 0.0);
        let mut s = 0.0;
        for (c, b) in needed {
            s += c * b.exact()?;
        }
        Some(s.abs().powf(self.p))
    }

    fn reveal_probability(&self, scheme: &ThresholdScheme, v: &[f64]) -> Option<f64> {
        let mut p: f64 = 1.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c != 0.0 {
                p = p.min(scheme.entry(i).ok()?.crossing_seed(v[i]));
            }
        }
        Some(p.clamp(0.0, 1.0))
    }
}

/// A base function restricted to a finite domain; infima are minima over the
/// domain vectors consistent with the bounds.
#[derive(Clone, Debug)]
pub struct DiscreteDomain {
    pub base: FunctionSpec,
    pub domain: Vec<Vec<f64>>,
}

impl DiscreteDomain {
    pub fn new(base: FunctionSpec, domain: Vec<Vec<f64>>) -> Result<Self> {
        let r = domain.first().map(Vec::len).ok_or_else(|| Error::InvalidValue("empty domain".into()))?;
        if domain.iter().any(|z| z.len() != r) {
            return Err(Error::InvalidValue("domain vectors differ in arity".into()));
        }
        base.check_arity(r)?;
        Ok(Self { base, domain })
    }

    pub fn consistent<'a>(&'a self, bounds: &'a [EntryBound]) -> impl Iterator<Item = &'a Vec<f64>> + 'a {
        self.domain
            .iter()
            .filter(move |z| z.iter().zip(bounds).all(|(&x, b)| b.contains(x)))
    }
}

impl CustomFunction for DiscreteDomain {
    fn name(&self) -> String {
        format!("{} on {} points", self.base, self.domain.len())
    }

    fn arity(&self) -> Option<usize> {
        self.domain.first().map(Vec::len)
    }

    fn value(&self, v: &[f64]) -> f64 {
        self.base.value(v).unwrap_or(f64::NAN)
    }

    fn infimum(&self, bounds: &[EntryBound]) -> f64 {
        self.consistent(bounds)
            .map(|z| self.value(z))
            .fold(f64::INFINITY, f64::min)
    }

    fn extremal_vectors(&self, bounds: &[EntryBound]) -> Option<Vec<Vec<f64>>> {
        Some(self.consistent(bounds).cloned().collect())
    }

    fn determined_value(&self, bounds: &[EntryBound]) -> Option<f64> {
        let mut it = self.consistent(bounds);
        let first = it.next()?;
        it.next().is_none().then(|| self.value(first))
    }

    fn reveal_probability(&self, scheme: &ThresholdScheme, v: &[f64]) -> Option<f64> {
        // outcomes only get coarser as u grows, so the singleton seeds form a prefix
        let mut cuts = scheme.breakpoints(v);
        cuts.push(1.0);
        let mut best = 0.0;
        for &u in &cuts {
            let seed = crate::sampling::Seed::new(u).ok()?;
            let dv = crate::sampling::DataVector::new(v.to_vec()).ok()?;
            let out = crate::sampling::sample_vector(&dv, seed, scheme).ok()?;
            if self.consistent(out.entries()).count() == 1 {
                best = u;
            } else {
                break;
            }
        }
        Some(best)
    }

    fn upper_condition(&self) -> bool {
        self.base.upper_condition()
    }
}
