//! Reference numerics used as independent oracles: closed-form Erlang tails,
//! adaptive quadrature of densities, and exact Gamma values on the
//! half-integer lattice.
//!
//! Nothing here is used on the simulation path. The bound and posterior
//! modules are checked against these.

use std::f64::consts::PI;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Gamma function on `{1/2, 1, 3/2, 2, ...}` by the recursion
/// `Gamma(a) = (a - 1) Gamma(a - 1)` from `Gamma(1) = 1` and `Gamma(1/2) = sqrt(pi)`.
pub fn gamma_half_integer(a: f64) -> Option<f64> {
    let twice = 2.0 * a;
    if a <= 0.0 || twice.fract() != 0.0 {
        return None;
    }
    let (mut x, mut value) = if a.fract() == 0.0 {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while x < a {
        value *= x;
        x += 1.0;
    }
    Some(value)
}

/// `P(X >= x)` for `X ~ Gamma(k, rate)` with integer shape `k`:
/// `exp(-rate x) * sum_{j<k} (rate x)^j / j!`.
pub fn erlang_ccdf(k: u32, rate: f64, x: f64) -> f64 {
    let z = rate * x;
    let mut term = 1.0;
    let mut sum = 0.0;
    for j in 0..k {
        if j > 0 {
            term *= z / f64::from(j);
        }
        sum += term;
    }
    (-z).exp() * sum
}

/// `P(X >= x)` for `X ~ Gamma(shape, rate)` by quadrature of the density.
///
/// `shape` must lie on the half-integer lattice so the normalizer is exact.
/// The tail is integrated in unit-mean-sized panels until a panel adds less
/// than `tol * 1e-3`.
pub fn gamma_ccdf_quadrature(shape: f64, rate: f64, x: f64, tol: f64) -> Option<f64> {
    let norm = gamma_half_integer(shape)?;
    let density = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            ((shape - 1.0) * (rate * t).ln() - rate * t).exp() * rate / norm
        }
    };
    let width = (shape.max(1.0)) / rate;
    let mut lo = x;
    let mut total = 0.0;
    for _ in 0..10_000 {
        let piece = adaptive_simpson(&density, lo, lo + width, tol * 1e-3);
        total += piece;
        lo += width;
        // Past the mode the density is decreasing, so a tiny panel bounds the rest.
        if lo > (shape - 1.0).max(0.0) / rate && piece < tol * 1e-3 {
            break;
        }
    }
    Some(total)
}

/// Regularized incomplete beta `I_y(a, b)` for integer `a, b >= 1` by
/// quadrature, normalized by the exact `B(a, b) = (a-1)!(b-1)!/(a+b-1)!`.
pub fn incomplete_beta_quadrature(a: u32, b: u32, y: f64, tol: f64) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let beta_fn = fact(a - 1) * fact(b - 1) / fact(a + b - 1);
    let density = |t: f64| t.powi(a as i32 - 1) * (1.0 - t).powi(b as i32 - 1) / beta_fn;
    // Fixed panels first, so a narrow peak cannot hide between the three
    // initial Simpson nodes.
    let panels = 64;
    let w = y / panels as f64;
    (0..panels)
        .map(|i| adaptive_simpson(&density, i as f64 * w, (i + 1) as f64 * w, tol / panels as f64))
        .sum()
}
