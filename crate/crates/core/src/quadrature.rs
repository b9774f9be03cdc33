//! Adaptive Simpson quadrature with infinite-interval support.

use std::cell::Cell;

const MAX_DEPTH: u32 = 48;
const INITIAL_PANELS: usize = 8;
/// Refinement budget per call; noisy integrands stop here instead of
/// exhausting the depth limit everywhere.
const MAX_EVALS: usize = 100_000;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// Either bound may be infinite; half-lines are mapped onto `[0, 1)` with
/// `x = a + t / (1 - t)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate_dyn(&f, a, b, rel_tol)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate_dyn(f, b, a, rel_tol);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => simpson(f, a, b, rel_tol),
        (true, false) => simpson(
            &|t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let u = 1.0 - t;
                let v = f(a + t / u) / (u * u);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            rel_tol,
        ),
        (false, true) => simpson(
            &|t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let u = 1.0 - t;
                let v = f(b - t / u) / (u * u);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            rel_tol,
        ),
        (false, false) => integrate_dyn(f, a, 0.0, rel_tol) + integrate_dyn(f, 0.0, b, rel_tol),
    }
}

/// Integrates over a finite interval split at the given interior breakpoints.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut total = 0.0;
    let mut left = a;
    for &c in breaks {
        if c > left && c < b {
            total += integrate(&f, left, c, rel_tol);
            left = c;
        }
    }
    total + integrate(&f, left, b, rel_tol)
}

fn simpson<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let width = (b - a) / INITIAL_PANELS as f64;
    let mut panels = Vec::with_capacity(INITIAL_PANELS);
    let mut scale = 0.0;
    for i in 0..INITIAL_PANELS {
        let lo = a + width * i as f64;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + width };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        scale += (hi - lo) / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs());
        panels.push((lo, hi, fa, fm, fb, whole));
    }
    let eps = (rel_tol * scale).max(1e-300) / INITIAL_PANELS as f64;
    panels
        .into_iter()
        .map(|(lo, hi, fa, fm, fb, whole)| {
            let budget = Cell::new(MAX_EVALS / INITIAL_PANELS);
            refine(f, lo, hi, fa, fm, fb, whole, eps, MAX_DEPTH, &budget)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
    budget: &Cell<usize>,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let left_evals = budget.get().saturating_sub(2);
    budget.set(left_evals);
    if depth == 0 || left_evals == 0 || delta.abs() <= 15.0 * eps || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1, budget)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, -1.0, 3.0, 1e-12);
        assert!((v - 12.0).abs() < 1e-12);
    }

    #[test]
    fn half_line_exponential() {
        let v = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, 1e-11);
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        let g = integrate(|x| (-0.5 * x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-11);
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9, "{g}");
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let v = integrate(|x| x, 1.0, 0.0, 1e-12);
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn kinked_integrand_with_breakpoint() {
        let v = integrate_split(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-12);
        assert!((v - 2.5).abs() < 1e-13);
    }
}
