use coordest::sampling::seed_from_key;
use coordest::verify::{
    aggregate_error_experiment, competitive_ratio, is_estimable, moments, property_suite, tightness_family, Check,
    SuiteConfig,
};
use coordest::{DataVector, DiscreteDomain, EstimatorKind, FunctionSpec, InstanceMatrix, ThresholdScheme};
use std::sync::Arc;

fn dv(v: &[f64]) -> DataVector {
    DataVector::new(v.to_vec()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// `∫_0^1 L*^2` for `(0.6, 0.2)`: `ln 3` on `(0, 0.2]`, `ln(0.6/u)` on `(0.2, 0.6]`.
/// With `u = 0.6 t`, the second piece is `0.6 ∫_{1/3}^1 ln^2 t dt`, whose
/// antiderivative is `t ln^2 t - 2 t ln t + 2 t`.
fn lstar_second_moment_oracle() -> f64 {
    let anti = |t: f64| t * t.ln().powi(2) - 2.0 * t * t.ln() + 2.0 * t;
    0.2 * 3f64.ln().powi(2) + 0.6 * (anti(1.0) - anti(1.0 / 3.0))
}

#[test]
fn moments_of_the_running_example() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let v = dv(&[0.6, 0.2]);

    let l = moments(&EstimatorKind::Lstar, &f, &s, &v, 1e-10).unwrap();
    let sm = lstar_second_moment_oracle();
    assert!(close(l.expectation, 0.4, 1e-8), "{l:?}");
    assert!(close(l.second_moment, sm, 1e-7), "{} vs {sm}", l.second_moment);
    assert!((l.second_moment - 0.3606).abs() < 5e-5);
    assert!((l.variance - 0.2006).abs() < 5e-5);
    assert!(!l.divergent);

    let ht = moments(&EstimatorKind::HorvitzThompson, &f, &s, &v, 1e-10).unwrap();
    assert!(close(ht.expectation, 0.4, 1e-12));
    assert!(close(ht.second_moment, 0.8, 1e-12));
    assert!(close(ht.variance, 0.64, 1e-12));

    let u = moments(&EstimatorKind::Ustar, &f, &s, &v, 1e-10).unwrap();
    assert!(close(u.expectation, 0.4, 1e-8));
    assert!(close(u.second_moment, 0.4, 1e-8));

    let opt = moments(&EstimatorKind::VOptOracle(v.clone()), &f, &s, &v, 1e-10).unwrap();
    assert!(close(opt.expectation, 0.4, 1e-12));
    assert!(close(opt.second_moment, 4.0 / 15.0, 1e-12));

    let r = competitive_ratio(&EstimatorKind::Lstar, &f, &s, &v).unwrap();
    assert!(close(r.ratio, sm * 15.0 / 4.0, 1e-7), "{}", r.ratio);
    assert!((r.ratio - 1.352).abs() < 5e-4);
    let r = competitive_ratio(&EstimatorKind::Ustar, &f, &s, &v).unwrap();
    assert!(close(r.ratio, 1.5, 1e-7), "{}", r.ratio);
}

#[test]
fn zero_valued_vectors_have_ratio_one() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let r = competitive_ratio(&EstimatorKind::Lstar, &f, &s, &dv(&[0.2, 0.6])).unwrap();
    assert_eq!(r.ratio, 1.0);
}

#[test]
fn oracle_rejects_other_vectors() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let oracle = EstimatorKind::VOptOracle(dv(&[0.6, 0.2]));
    assert!(moments(&oracle, &f, &s, &dv(&[0.5, 0.2]), 1e-10).is_err());
}

#[test]
fn tightness_family_values() {
    let t = tightness_family(0.25).unwrap();
    assert!(close(t.opt_sm, 2.0, 1e-12));
    assert!(close(t.lstar_sm, 16.0 / 3.0, 1e-12));
    assert!(close(t.ratio, 8.0 / 3.0, 1e-12));
    assert!(t.max_rel_gap < 1e-4, "{t:?}");

    let t = tightness_family(0.49).unwrap();
    assert!((t.ratio - 3.9216).abs() < 5e-5);
    assert!(t.ratio < 4.0);
    assert!(tightness_family(0.5).is_err());
}

#[test]
fn estimability() {
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    assert!(is_estimable(&f, &ThresholdScheme::unit_pps(2), &dv(&[0.6, 0.2])).unwrap());
    // a value below the only level is never sampled, so its difference is never pinned down
    let domain = vec![vec![0.5, 0.0], vec![0.0, 0.0]];
    let g = FunctionSpec::Custom(Arc::new(DiscreteDomain::new(f, domain).unwrap()));
    let step = ThresholdScheme::step(2, &[0.5], &[1.0]).unwrap();
    assert!(!is_estimable(&g, &step, &dv(&[0.5, 0.0])).unwrap());
}

#[test]
fn grid_suite_rg_plus() {
    let report = property_suite(&SuiteConfig::square_grid(FunctionSpec::RgPPlus { p: 1.0 }, 8));
    assert!(report.passed(), "{:?}", &report.violations[..report.violations.len().min(5)]);
    assert_eq!(report.vectors, 64);
    assert!(report.max_lstar_ratio > 1.0 && report.max_lstar_ratio <= 4.0);
}

#[test]
fn grid_suite_rg_square() {
    let mut cfg = SuiteConfig::square_grid(FunctionSpec::RgP { p: 2.0 }, 4);
    cfg.seeds = (1..=19).map(|i| i as f64 / 19.0).collect();
    let report = property_suite(&cfg);
    assert!(report.passed(), "{:?}", &report.violations[..report.violations.len().min(5)]);
}

#[test]
fn suite_skips_domination_where_ht_is_undefined() {
    let mut cfg = SuiteConfig::square_grid(FunctionSpec::RgPPlus { p: 1.0 }, 2);
    cfg.check_ustar = false;
    cfg.scheme = ThresholdScheme::pps(&[1.0, 1.0]).unwrap();
    cfg.vectors = vec![dv(&[0.5, 0.0])];
    let report = property_suite(&cfg);
    assert!(report.passed(), "{:?}", report.violations);
    assert_eq!(report.count(Check::Domination), 0);
}

fn synthetic_matrix(n: usize) -> InstanceMatrix {
    let keys: Vec<String> = (0..n).map(|i| format!("item{i}")).collect();
    let rows = keys
        .iter()
        .map(|k| {
            let a = seed_from_key(k.as_bytes(), b"first").value();
            let b = seed_from_key(k.as_bytes(), b"second").value();
            vec![a, a * b]
        })
        .collect();
    InstanceMatrix::new(2, keys, rows).unwrap()
}

#[test]
fn aggregate_error_shrinks_with_more_items() {
    let m = synthetic_matrix(1600);
    let f = FunctionSpec::RgPPlus { p: 1.0 };
    let s = ThresholdScheme::unit_pps(2);
    let report = aggregate_error_experiment(&m, &f, &s, &EstimatorKind::Lstar, &[25, 100, 400, 1600], 200, "agg").unwrap();
    for row in &report.rows {
        assert!((row.mean - row.truth).abs() <= 4.0 * row.std_error, "{row:?}");
    }
    assert!(report.scales_as_inverse_sqrt(0.35), "{:?}", report.rows);
    let ratio = report.rmse_ratio(25, 1600).unwrap();
    assert!((ratio / 8.0 - 1.0).abs() < 0.35, "{ratio}");
    assert!(aggregate_error_experiment(&m, &f, &s, &EstimatorKind::Lstar, &[2000], 2, "x").is_err());
}
