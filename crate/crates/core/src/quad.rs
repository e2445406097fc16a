//! Adaptive Simpson quadrature and the special integral used by closed-form L*.

/// Default absolute tolerance.
pub const ABS_TOL: f64 = 1e-9;
/// Cap on the number of subintervals one call may create.
pub const MAX_SUBDIVISIONS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the Richardson error estimates of accepted panels.
    pub error: f64,
    /// True when the subdivision cap or depth limit cut refinement short.
    pub capped: bool,
}

struct State {
    budget: usize,
    error: f64,
    capped: bool,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    if b <= a {
        return Quadrature { value: 0.0, error: 0.0, capped: false };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut st = State { budget: MAX_SUBDIVISIONS, error: 0.0, capped: false };
    let value = recurse(&f, a, b, fa, fm, fb, whole, tol, 60, &mut st);
    Quadrature { value, error: st.error, capped: st.capped }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    st: &mut State,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || st.budget == 0 || m <= a || m >= b {
        if delta.abs() > 15.0 * tol {
            st.capped = true;
        }
        st.error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    st.budget -= 1;
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, st)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, st)
}

/// Integrates `f` and `f^2` together over `[a, b]`; refinement continues until
/// both meet `tol`.
pub fn simpson_with_square<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (Quadrature, Quadrature) {
    if b <= a {
        let z = Quadrature { value: 0.0, error: 0.0, capped: false };
        return (z, z);
    }
    let ends = [f(a), f(0.5 * (a + b)), f(b)];
    let whole = pair_rule(a, b, ends);
    let mut st = [
        State { budget: MAX_SUBDIVISIONS, error: 0.0, capped: false },
        State { budget: MAX_SUBDIVISIONS, error: 0.0, capped: false },
    ];
    let (v1, v2) = recurse_pair(&f, a, b, ends, whole, tol, 60, &mut st);
    (
        Quadrature { value: v1, error: st[0].error, capped: st[0].capped },
        Quadrature { value: v2, error: st[1].error, capped: st[1].capped },
    )
}

fn pair_rule(a: f64, b: f64, [fa, fm, fb]: [f64; 3]) -> (f64, f64) {
    let w = (b - a) / 6.0;
    (w * (fa + 4.0 * fm + fb), w * (fa * fa + 4.0 * fm * fm + fb * fb))
}

#[allow(clippy::too_many_arguments)]
fn recurse_pair<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    [fa, fm, fb]: [f64; 3],
    whole: (f64, f64),
    tol: f64,
    depth: u32,
    st: &mut [State; 2],
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = pair_rule(a, m, [fa, flm, fm]);
    let right = pair_rule(m, b, [fm, frm, fb]);
    let d = (left.0 + right.0 - whole.0, left.1 + right.1 - whole.1);
    let done = d.0.abs() <= 15.0 * tol && d.1.abs() <= 15.0 * tol;
    if done || depth == 0 || st[0].budget == 0 || m <= a || m >= b {
        for (s, dk) in st.iter_mut().zip([d.0, d.1]) {
            s.capped |= dk.abs() > 15.0 * tol;
            s.error += dk.abs() / 15.0;
        }
        return (left.0 + right.0 + d.0 / 15.0, left.1 + right.1 + d.1 / 15.0);
    }
    st[0].budget -= 1;
    let l = recurse_pair(f, a, m, [fa, flm, fm], left, 0.5 * tol, depth - 1, st);
    let r = recurse_pair(f, m, b, [fm, frm, fb], right, 0.5 * tol, depth - 1, st);
    (l.0 + r.0, l.1 + r.1)
}

/// `∫_t^1 (1-s)^(e-1) / s ds` for `t ∈ (0, 1]`, `e > 0`, by series.
///
/// For `t >= 1/2` the expansion in `w = 1-t` is `Σ w^(e+k)/(e+k)`. Below 1/2
/// the integrand is split as `1/s + ((1-s)^(e-1) - 1)/s`; the first part is a
/// log and the second has a Taylor series convergent on `[0, 1/2]`.
pub fn power_log_integral(e: f64, t: f64) -> f64 {
    assert!(e > 0.0, "exponent must be positive");
    assert!(t > 0.0, "lower limit must be positive");
    if t >= 1.0 {
        return 0.0;
    }
    if t >= 0.5 {
        return upper_series(e, 1.0 - t);
    }
    let mut sum = upper_series(e, 0.5) + (0.5 / t).ln();
    let mut coeff = 1.0;
    let mut half_pow = 1.0;
    let mut t_pow = 1.0;
    for j in 1..400 {
        let jf = j as f64;
        coeff *= (jf - e) / jf;
        half_pow *= 0.5;
        t_pow *= t;
        let term = coeff * (half_pow - t_pow) / jf;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1.0) && coeff.abs() * half_pow < 1e-18 {
            break;
        }
    }
    sum
}

fn upper_series(e: f64, w: f64) -> f64 {
    let mut sum = 0.0;
    let mut w_pow = w.powf(e);
    for k in 0..400 {
        let term = w_pow / (e + k as f64);
        sum += term;
        if term <= 1e-18 * sum {
            break;
        }
        w_pow *= w;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let q = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((q.value - 0.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_smooth() {
        let q = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10);
        assert!((q.value - 2.0).abs() < 1e-9);
        assert!(!q.capped);
    }

    #[test]
    fn paired_rule_integrates_square() {
        let (q, q2) = simpson_with_square(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((q.value - 2.0 / 3.0).abs() < 1e-8);
        assert!((q2.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_integral_unit_exponent_is_log() {
        for &t in &[0.01, 0.2, 0.5, 0.7, 0.99] {
            assert!((power_log_integral(1.0, t) + f64::ln(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn log_integral_matches_quadrature() {
        for &e in &[0.5, 1.5, 2.0, 3.7] {
            for &t in &[0.001, 0.1, 0.45, 0.5, 0.8] {
                let f = |s: f64| (1.0 - s).powf(e - 1.0) / s;
                let q = if e >= 1.0 {
                    adaptive_simpson(f, t, 1.0, 1e-13).value
                } else {
                    // e = 1/2: substituting s = 1 - y^2 gives 2/(1-y^2), an atanh
                    let y = (1.0 - t).sqrt();
                    ((1.0 + y) / (1.0 - y)).ln()
                };
                let got = power_log_integral(e, t);
                assert!((got - q).abs() < 1e-9, "e={e} t={t}: {got} vs {q}");
            }
        }
    }
}
