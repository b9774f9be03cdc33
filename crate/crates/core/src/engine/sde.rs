//! Euler–Maruyama for `dX = σ(X) dW` with `σ² = 1/ν`.
//!
//! The step is `dt` unless `σ(x) √dt` would exceed a fixed fraction of the
//! target's length scale, in which case it shrinks to keep the spatial
//! increment at that size. This only bites where `σ` is large, as in the
//! tails of a strict local martingale.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::{SimConfig, MAX_RESTARTS};
use crate::error::{Error, Result};
use crate::synthesis::DiffusionModel;

const SCAN_POINTS: usize = 2000;
const MAX_MOVE: f64 = 0.05;

pub(super) struct SdeContext<'a> {
    model: &'a DiffusionModel,
    lo: f64,
    hi: f64,
    guard_lo: f64,
    guard_hi: f64,
    dt: f64,
    /// Largest allowed `σ² h`.
    max_var: f64,
    freeze: bool,
    exp: Exp<f64>,
}

impl<'a> SdeContext<'a> {
    pub(super) fn new(model: &'a DiffusionModel, cfg: &SimConfig) -> Result<Self> {
        if !model.speed_atoms().is_empty() {
            return Err(Error::EngineMismatch(format!(
                "speed measure has {} atom(s); use the ctmc engine",
                model.speed_atoms().len()
            )));
        }
        let (lo, hi) = model.support();
        let (a, b) = model.truncated_range(cfg.truncation_quantile)?;
        for i in 1..SCAN_POINTS {
            let x = a + (b - a) * i as f64 / SCAN_POINTS as f64;
            let nu = model.speed_density(x);
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::EngineMismatch(format!("speed density is {nu} at {x}")));
            }
        }
        let guard_lo = if lo.is_finite() { f64::NEG_INFINITY } else { a };
        let guard_hi = if hi.is_finite() { f64::INFINITY } else { b };
        Ok(Self {
            model,
            lo,
            hi,
            guard_lo,
            guard_hi,
            dt: cfg.dt,
            max_var: (MAX_MOVE * model.target().length_scale()).powi(2),
            freeze: cfg.freeze_time,
            exp: Exp::new(model.lambda()).map_err(|e| Error::InvalidParameters(e.to_string()))?,
        })
    }

    fn sigma(&self, x: f64) -> f64 {
        let s2 = self.model.sigma_sq(x);
        if s2.is_finite() {
            s2.sqrt()
        } else {
            0.0
        }
    }

    /// `σ(x)` and the step length to use from `x`.
    fn local(&self, x: f64) -> (f64, f64) {
        let s = self.sigma(x);
        let var = s * s;
        let h = if var * self.dt > self.max_var { self.max_var / var } else { self.dt };
        (s, h)
    }

    /// Mirror images across finite ends until `x` is back in the support.
    fn fold(&self, mut x: f64) -> f64 {
        loop {
            if x < self.lo {
                x = 2.0 * self.lo - x;
            } else if x > self.hi {
                x = 2.0 * self.hi - x;
            } else {
                return x;
            }
        }
    }

    /// One draw of `X_T` plus the number of guard restarts.
    pub(super) fn terminal<R: Rng>(&self, rng: &mut R) -> Result<(f64, u32)> {
        let x0 = self.model.x0();
        let mut restarts = 0u32;
        'path: loop {
            let mut rest = if self.freeze { 0.0 } else { self.exp.sample(rng) };
            let mut x = x0;
            while rest > 0.0 {
                let (s, h) = self.local(x);
                let h = h.min(rest);
                rest = if h == rest { 0.0 } else { rest - h };
                let z: f64 = rng.sample(StandardNormal);
                x = self.fold(x + s * h.sqrt() * z);
                if x < self.guard_lo || x > self.guard_hi {
                    restarts += 1;
                    if restarts > MAX_RESTARTS {
                        return Err(Error::BudgetExceeded(format!("{MAX_RESTARTS} truncation restarts on one path")));
                    }
                    continue 'path;
                }
            }
            return Ok((x, restarts));
        }
    }

    /// One draw of `exp(-λ H)` (zero if the level is not reached in time).
    /// Crossings between step times are detected with the Brownian-bridge
    /// probability `exp(-2 (x - L)(x' - L) / (σ² h))`.
    pub(super) fn hitting<R: Rng>(&self, start: f64, level: f64, horizon: f64, rng: &mut R) -> f64 {
        let lambda = self.model.lambda();
        let mut x = start;
        let mut t = 0.0;
        while t < horizon {
            let (s, h) = self.local(x);
            let z: f64 = rng.sample(StandardNormal);
            let mut next = self.fold(x + s * h.sqrt() * z);
            if next < self.guard_lo {
                next = 2.0 * self.guard_lo - next;
            } else if next > self.guard_hi {
                next = 2.0 * self.guard_hi - next;
            }
            let a = x - level;
            let b = next - level;
            let crossed = if a * b <= 0.0 {
                true
            } else if s > 0.0 {
                let p = (-2.0 * a * b / (s * s * h)).exp();
                rng.random::<f64>() < p
            } else {
                false
            };
            if crossed {
                return (-lambda * (t + 0.5 * h)).exp();
            }
            x = next;
            t += h;
        }
        0.0
    }
}
