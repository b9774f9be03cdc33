//! Classical RK4 for the linear second-order equation `y'' = q(x) y`.

use crate::error::{Error, Result};

const OVERFLOW: f64 = 1e300;

fn rk4_step<Q: Fn(f64) -> f64>(q: &Q, x: f64, y: f64, dy: f64, h: f64) -> (f64, f64) {
    let qm = q(x + 0.5 * h);
    let k1 = (dy, q(x) * y);
    let k2 = (dy + 0.5 * h * k1.1, qm * (y + 0.5 * h * k1.0));
    let k3 = (dy + 0.5 * h * k2.1, qm * (y + 0.5 * h * k2.0));
    let k4 = (dy + h * k3.1, q(x + h) * (y + h * k3.0));
    (
        y + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        dy + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrates from `x_start` to `x_end` (either direction) with step
/// doubling; `tol` bounds the local error relative to `max(1, |y|)`.
pub fn integrate_adaptive<Q: Fn(f64) -> f64>(
    q: Q,
    x_start: f64,
    y0: f64,
    dy0: f64,
    x_end: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let span = x_end - x_start;
    if span == 0.0 {
        return Ok((y0, dy0));
    }
    let dir = span.signum();
    let h_min = span.abs() * 1e-14;
    let mut h = span.abs() / 64.0;
    let (mut x, mut y, mut dy) = (x_start, y0, dy0);
    while (x_end - x) * dir > 0.0 {
        let step = h.min((x_end - x).abs());
        let full = rk4_step(&q, x, y, dy, dir * step);
        let half = rk4_step(&q, x, y, dy, dir * step * 0.5);
        let two = rk4_step(&q, x + dir * step * 0.5, half.0, half.1, dir * step * 0.5);
        let scale = 1.0f64.max(two.0.abs()).max(two.1.abs() * step);
        let err = ((two.0 - full.0).abs().max((two.1 - full.1).abs() * step) / 15.0) / scale;
        if !err.is_finite() {
            if step <= h_min {
                return Err(Error::IntegrationOverflow(x));
            }
            h = step * 0.25;
            continue;
        }
        if err <= tol || step <= h_min {
            x = if (x_end - x).abs() <= step { x_end } else { x + dir * step };
            y = two.0 + (two.0 - full.0) / 15.0;
            dy = two.1 + (two.1 - full.1) / 15.0;
            if !(y.abs() < OVERFLOW && dy.abs() < OVERFLOW) {
                return Err(Error::IntegrationOverflow(x));
            }
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.1, 4.0) };
        h = (step * factor).max(h_min);
    }
    Ok((y, dy))
}

/// Fixed-step RK4 with `steps` equal steps (reference runs, convergence checks).
pub fn integrate_fixed<Q: Fn(f64) -> f64>(q: Q, x_start: f64, y0: f64, dy0: f64, x_end: f64, steps: usize) -> (f64, f64) {
    let h = (x_end - x_start) / steps as f64;
    let (mut y, mut dy) = (y0, dy0);
    for i in 0..steps {
        (y, dy) = rk4_step(&q, x_start + h * i as f64, y, dy, h);
    }
    (y, dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let (y, dy) = integrate_adaptive(|_| 1.0, 0.0, 1.0, 1.0, 1.0, 1e-10).unwrap();
        assert!((y - 1f64.exp()).abs() < 1e-8);
        assert!((dy - 1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn backwards_integration() {
        let (y, _) = integrate_adaptive(|_| 4.0, 0.0, 1.0, -2.0, -1.0, 1e-10).unwrap();
        assert!((y - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = 1f64.exp();
        let e1 = (integrate_fixed(|_| 1.0, 0.0, 1.0, 1.0, 1.0, 20).0 - exact).abs();
        let e2 = (integrate_fixed(|_| 1.0, 0.0, 1.0, 1.0, 1.0, 40).0 - exact).abs();
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn overflow_is_reported() {
        let r = integrate_adaptive(|_| 1e6, 0.0, 1.0, 1e3, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::IntegrationOverflow(_))));
    }
}
