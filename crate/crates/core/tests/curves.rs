use coordest::curve::{curve_from_data, curve_suffix_from_outcome, PiecewiseCurve};
use coordest::hull::{lambda_value, lower_hull, v_optimal};
use coordest::range::{existence_checks, lambda_bounds, Existence, Tri};
use coordest::sampling::sample_vector;
use coordest::{AbsLinearPower, DataVector, DiscreteDomain, EntryBound, Error, FunctionSpec, Outcome, Seed, ThresholdScheme};
use proptest::prelude::*;
use std::sync::Arc;

fn dv(v: &[f64]) -> DataVector {
    DataVector::new(v.to_vec()).unwrap()
}

fn outcome(rho: f64, e: Vec<EntryBound>) -> Outcome {
    Outcome::from_parts(Seed::new(rho).unwrap(), e)
}

/// Infimum of the range functions over the consistent box, by checking the
/// only places a minimum can sit: 0, just under each bound, and the sampled values.
fn brute_lower_bound(fspec: &FunctionSpec, scheme: &ThresholdScheme, v: &[f64], u: f64) -> f64 {
    let o = sample_vector(&dv(v), Seed::new(u).unwrap(), scheme).unwrap();
    let exact: Vec<f64> = o.entries().iter().filter_map(|e| e.exact()).collect();
    let choices: Vec<Vec<f64>> = o
        .entries()
        .iter()
        .map(|e| match *e {
            EntryBound::Exact(x) => vec![x],
            EntryBound::Below(t) => {
                let mut c = vec![0.0, t * (1.0 - 1e-13)];
                c.extend(exact.iter().copied().filter(|&x| x < t));
                c
            }
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; v.len()];
    loop {
        let z: Vec<f64> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        best = best.min(fspec.value(&z).unwrap());
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            return best;
        }
    }
}

/// Lower convex hull of dense samples of `curve` on `[0, 1]`, closed by the
/// anchor `(1, 0)`, evaluated by linear interpolation.
fn grid_hull(curve: &PiecewiseCurve, n: usize) -> impl Fn(f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = vec![(0.0, curve.at_start())];
    pts.extend((1..n).map(|k| {
        let u = k as f64 / n as f64;
        (u, curve.eval(u))
    }));
    pts.push((1.0, 0.0));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    move |u: f64| {
        let k = hull.partition_point(|p| p.0 < u).clamp(1, hull.len() - 1);
        let (a, b) = (hull[k - 1], hull[k]);
        a.1 + (b.1 - a.1) * (u - a.0) / (b.0 - a.0)
    }
}

#[test]
fn range_exponent_curve_values() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let c = curve_from_data(&f, &ThresholdScheme::unit_pps(2), &dv(&[0.6, 0.2])).unwrap();
    assert!((c.eval(0.4) - 0.2).abs() < 1e-15);
    assert!((c.eval(0.1) - 0.4).abs() < 1e-15);
    assert_eq!(c.eval(0.7), 0.0);
    assert!((c.at_start() - 0.4).abs() < 1e-15);
}

#[test]
fn tight_family_curve_at_zero() {
    for &p in &[0.0, 0.25, 0.4] {
        let f = FunctionSpec::TightFamily { p };
        let c = curve_from_data(&f, &ThresholdScheme::unit_pps(1), &dv(&[0.0])).unwrap();
        for &u in &[1e-6f64, 0.01, 0.3, 0.9, 1.0] {
            let want = (1.0 - u.powf(1.0 - p)) / (1.0 - p);
            assert!((c.eval(u) - want).abs() < 1e-14, "p={p} u={u}");
        }
    }
}

#[test]
fn zero_valued_vectors_have_zero_curves() {
    let s = ThresholdScheme::pps(&[1.0, 3.0]).unwrap();
    assert!(curve_from_data(&FunctionSpec::RgP { p: 2.0 }, &s, &dv(&[0.4, 0.4])).unwrap().is_zero());
    assert!(curve_from_data(&FunctionSpec::RgPPlus { p: 0.5 }, &s, &dv(&[0.2, 0.9])).unwrap().is_zero());
}

#[test]
fn suffix_curves_from_outcomes() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let c = curve_suffix_from_outcome(&f, &s, &outcome(0.4, vec![EntryBound::Exact(0.6), EntryBound::Below(0.4)])).unwrap();
    for &u in &[0.4, 0.45, 0.6] {
        assert!((c.eval(u) - (0.6 - u)).abs() < 1e-15);
    }
    assert_eq!(c.eval(0.61), 0.0);
    assert_eq!(c.eval(1.0), 0.0);

    let nothing = curve_suffix_from_outcome(&f, &s, &outcome(0.9, vec![EntryBound::Below(0.9); 2])).unwrap();
    assert!(nothing.is_zero());

    // both entries of (0.8, 0.7) sampled at 0.23: constant 0.1 until the smaller one drops out
    let o = sample_vector(&dv(&[0.8, 0.7]), Seed::new(0.23).unwrap(), &s).unwrap();
    let c = curve_suffix_from_outcome(&f, &s, &o).unwrap();
    for &u in &[0.23, 0.5, 0.7] {
        assert!((c.eval(u) - 0.1).abs() < 1e-15);
    }
    assert!((c.eval(0.75) - 0.05).abs() < 1e-15);
}

#[test]
fn concave_then_zero_hull_is_one_line() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let c = curve_from_data(&f, &s, &dv(&[0.6, 0.2])).unwrap();
    let h = lower_hull(&c, 1.0, 0.0).unwrap();
    let oracle = grid_hull(&c, 20_000);
    for k in 0..=100 {
        let u = k as f64 / 100.0;
        assert!((h.value(u) - oracle(u)).abs() < 1e-4, "u={u}");
    }
    assert!((h.rate(0.3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(h.rate(0.7).unwrap(), 0.0);
    let opt = v_optimal(&f, &s, &dv(&[0.6, 0.2])).unwrap();
    assert!((opt.second_moment() - 4.0 / 15.0).abs() < 1e-12);
}

#[test]
fn convex_curves_are_their_own_hulls() {
    let f = FunctionSpec::TightFamily { p: 0.25 };
    let c = curve_from_data(&f, &ThresholdScheme::unit_pps(1), &dv(&[0.0])).unwrap();
    let h = lower_hull(&c, 1.0, 0.0).unwrap();
    for &u in &[1e-8, 1e-3, 0.2, 0.7, 1.0] {
        assert!((h.value(u) - c.eval(u)).abs() < 1e-12);
        assert!((h.rate(u).unwrap() - u.powf(-0.25)).abs() < 1e-9 * u.powf(-0.25));
    }
    let opt = v_optimal(&FunctionSpec::RgPPlus { p: 1.0 }, &ThresholdScheme::unit_pps(2), &dv(&[0.6, 0.0])).unwrap();
    assert!((opt.rate(0.3).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(opt.rate(0.61).unwrap(), 0.0);
}

fn small_grid_domain(levels: &[f64]) -> Vec<Vec<f64>> {
    let mut values = vec![0.0];
    values.extend_from_slice(levels);
    values.iter().flat_map(|&a| values.iter().map(move |&b| vec![a, b])).collect()
}

#[test]
fn step_scheme_hull_on_finite_domain() {
    let base = FunctionSpec::RgPPlus { p: 1.0 };
    let f = FunctionSpec::Custom(Arc::new(DiscreteDomain::new(base, small_grid_domain(&[1.0, 2.0])).unwrap()));
    let s = ThresholdScheme::step(2, &[0.25, 0.5], &[1.0, 2.0]).unwrap();
    let c = curve_from_data(&f, &s, &dv(&[2.0, 0.0])).unwrap();
    assert_eq!(c.eval(0.2), 2.0);
    assert_eq!(c.eval(0.3), 1.0);
    assert_eq!(c.eval(0.6), 0.0);
    let h = v_optimal(&f, &s, &dv(&[2.0, 0.0])).unwrap();
    let oracle = grid_hull(&c, 20_000);
    for k in 0..=40 {
        let u = k as f64 / 40.0;
        let line = (2.0 - 4.0 * u).max(0.0);
        assert!((h.value(u) - line).abs() < 1e-12, "u={u}");
        assert!((oracle(u) - line).abs() < 1e-3, "u={u}");
    }
}

#[test]
fn lambda_values() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let c = curve_from_data(&f, &ThresholdScheme::unit_pps(2), &dv(&[0.6, 0.0])).unwrap();
    let (rho, m) = (0.4, 0.03781);
    let grid_min = (0..40_000)
        .map(|k| k as f64 * rho / 40_000.0)
        .map(|eta| (c.eval(eta.max(1e-300)) - m) / (rho - eta))
        .fold(f64::INFINITY, f64::min);
    let lam = lambda_value(&c, rho, m).unwrap();
    assert!((lam - (0.6 - m) / rho).abs() < 1e-12);
    assert!((lam - grid_min).abs() < 1e-9);
    assert!((lam - 1.4056).abs() < 2e-4);

    // flat just left of rho: nothing to gain below
    let flat = curve_from_data(&f, &ThresholdScheme::unit_pps(2), &dv(&[0.6, 0.2])).unwrap();
    assert_eq!(lambda_value(&flat, 0.15, flat.eval(0.15)).unwrap(), 0.0);
    // on a sloped stretch the left derivative remains
    assert!((lambda_value(&c, 0.4, c.eval(0.4)).unwrap() - 1.0).abs() < 1e-12);

    let p = 0.3;
    let tight = curve_from_data(&FunctionSpec::TightFamily { p }, &ThresholdScheme::unit_pps(1), &dv(&[0.0])).unwrap();
    for &rho in &[0.05, 0.5, 0.9] {
        let lam = lambda_value(&tight, rho, tight.eval(rho)).unwrap();
        let h = 1e-6;
        let fd = (tight.eval(rho - h) - tight.eval(rho + h)) / (2.0 * h);
        assert!((lam - fd).abs() < 1e-6 * fd, "rho={rho}");
        assert!((lam - rho.powf(-p)).abs() < 1e-12);
    }
    assert!(matches!(lambda_value(&c, 0.4, 0.5), Err(Error::AnchorOutOfRange { .. })));
}

#[test]
fn optimal_range_examples() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let o = outcome(0.4, vec![EntryBound::Exact(0.6), EntryBound::Below(0.4)]);
    let r = lambda_bounds(&f, &s, &o, 0.03781).unwrap();
    assert!((r.lambda_l - (0.2 - 0.03781) / 0.4).abs() < 1e-12);
    assert!((r.lambda_l - 0.40548).abs() < 1e-5);
    assert!((r.lambda_u - (0.6 - 0.03781) / 0.4).abs() < 1e-12);

    let zero = outcome(0.8, vec![EntryBound::Exact(0.6), EntryBound::Below(0.8)]);
    assert_eq!(lambda_bounds(&f, &s, &zero, 0.0).unwrap().lambda_l, 0.0);

    let full = outcome(0.1, vec![EntryBound::Exact(0.6), EntryBound::Exact(0.2)]);
    let r = lambda_bounds(&f, &s, &full, 0.25).unwrap();
    assert!((r.lambda_l - r.lambda_u).abs() < 1e-12);
    let c = curve_from_data(&f, &s, &dv(&[0.6, 0.2])).unwrap();
    assert!((r.lambda_l - lambda_value(&c, 0.1, 0.25).unwrap()).abs() < 1e-12);
}

#[test]
fn existence_of_estimators() {
    let yes = Existence { unbiased: Tri::Yes, finite_variance: Tri::Yes, bounded: Tri::Yes };
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    assert_eq!(existence_checks(&f, &s, &dv(&[0.6, 0.0])).unwrap(), yes);
    assert_eq!(existence_checks(&f, &s, &dv(&[0.6, 0.2])).unwrap(), yes);
    let tight = existence_checks(&FunctionSpec::TightFamily { p: 0.25 }, &ThresholdScheme::unit_pps(1), &dv(&[0.0])).unwrap();
    assert_eq!(tight, Existence { unbiased: Tri::Yes, finite_variance: Tri::Yes, bounded: Tri::No });

    // finite domain under a step scheme: the curve reaches f at the first breakpoint
    let base = FunctionSpec::RgPPlus { p: 1.0 };
    let f = FunctionSpec::Custom(Arc::new(DiscreteDomain::new(base, small_grid_domain(&[1.0, 2.0])).unwrap()));
    let s = ThresholdScheme::step(2, &[0.25, 0.5], &[1.0, 2.0]).unwrap();
    assert_eq!(existence_checks(&f, &s, &dv(&[2.0, 0.0])).unwrap(), yes);

    let g = FunctionSpec::Custom(Arc::new(AbsLinearPower { coeffs: vec![1.0, -2.0, 1.0], p: 2.0 }));
    let e = existence_checks(&g, &ThresholdScheme::unit_pps(3), &dv(&[0.7, 0.8, 0.1])).unwrap();
    assert_eq!(e.unbiased, Tri::Yes);
}

fn rg_case() -> impl Strategy<Value = (FunctionSpec, ThresholdScheme, Vec<f64>)> {
    (prop::bool::ANY, prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.2f64..3.0]).prop_flat_map(|(plus, p)| {
        let r: std::ops::Range<usize> = if plus { 2..3 } else { 2..4 };
        r.prop_flat_map(move |r| {
            let f = if plus { FunctionSpec::RgPPlus { p } } else { FunctionSpec::RgP { p } };
            (
                Just(f),
                prop::collection::vec(0.3f64..2.5, r).prop_map(|rates| ThresholdScheme::pps(&rates).unwrap()),
                prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.5], r),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curves_match_brute_force_infimum((f, s, v) in rg_case(), u in 1e-6f64..=1.0) {
        let c = curve_from_data(&f, &s, &dv(&v)).unwrap();
        let want = brute_lower_bound(&f, &s, &v, u);
        prop_assert!((c.eval(u) - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", c.eval(u), want);
    }

    #[test]
    fn curves_are_monotone_and_reach_the_value((f, s, v) in rg_case()) {
        let c = curve_from_data(&f, &s, &dv(&v)).unwrap();
        let mut prev = c.at_start();
        prop_assert!((prev - f.value(&v).unwrap()).abs() < 1e-12);
        for k in 1..=400 {
            let x = c.eval(k as f64 / 400.0);
            prop_assert!(x >= 0.0 && x <= prev + 1e-12);
            prev = x;
        }
    }

    #[test]
    fn suffix_agrees_with_full_curve((f, s, v) in rg_case(), rho in 1e-4f64..=1.0) {
        let full = curve_from_data(&f, &s, &dv(&v)).unwrap();
        let o = sample_vector(&dv(&v), Seed::new(rho).unwrap(), &s).unwrap();
        let suffix = curve_suffix_from_outcome(&f, &s, &o).unwrap();
        for k in 0..=50 {
            let u = rho + (1.0 - rho) * k as f64 / 50.0;
            prop_assert!((full.eval(u) - suffix.eval(u)).abs() <= 1e-12 * full.eval(u).max(1.0), "u={}", u);
        }
    }

    #[test]
    fn hulls_are_convex_minorants((f, s, v) in rg_case()) {
        let c = curve_from_data(&f, &s, &dv(&v)).unwrap();
        let h = lower_hull(&c, 1.0, 0.0).unwrap();
        let mut prev_rate = f64::INFINITY;
        for k in 1..=500 {
            let u = k as f64 / 500.0;
            prop_assert!(h.value(u) <= c.eval(u) + 1e-12);
            let rate = h.rate(u).unwrap();
            prop_assert!(rate <= prev_rate + 1e-9 * rate.max(1.0));
            prev_rate = rate;
        }
        prop_assert!((h.mass() - f.value(&v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn lambda_matches_hull_slope((f, s, v) in rg_case(), rho in 0.01f64..0.99) {
        let c = curve_from_data(&f, &s, &dv(&v)).unwrap();
        let h = lower_hull(&c, 1.0, 0.0).unwrap();
        let lam = lambda_value(&c, rho, h.value(rho)).unwrap();
        let rate = h.rate(rho).unwrap();
        prop_assert!((lam - rate).abs() <= 1e-9 * rate.max(1.0), "{} vs {}", lam, rate);
    }

    #[test]
    fn range_is_ordered((f, s, v) in rg_case(), rho in 0.01f64..=1.0, frac in 0.0f64..=1.0) {
        let o = sample_vector(&dv(&v), Seed::new(rho).unwrap(), &s).unwrap();
        let bound = curve_suffix_from_outcome(&f, &s, &o).unwrap().eval(rho);
        let r = lambda_bounds(&f, &s, &o, frac * bound).unwrap();
        prop_assert!(r.lambda_l >= 0.0 && r.lambda_l <= r.lambda_u);
    }
}
