//! λ-eigenfunctions of a synthesized model, their continuation across the
//! start point, hitting-time Laplace transforms and the representing measure.

use crate::error::{Error, Result};
use crate::measure::{Atom, DensityPiece, TargetMeasure};
use crate::ode::{integrate_adaptive, integrate_fixed};

use super::{DiffusionModel, StartPosition};

const EXTENSION_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-3;

/// Which eigenfunction to continue past the start point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionSide {
    /// The increasing solution, continued to the right of `x0`.
    IncreasingAboveStart,
    /// The decreasing solution, continued to the left of `x0`.
    DecreasingBelowStart,
}

/// Increasing (`φ`) and decreasing (`ϕ`) solutions of `½ f'' = λ ν f`,
/// normalized to one at the start.
///
/// `φ = W (P - P(x0)) + 1` on `[a, x0]` and `ϕ = W (C - C(x0)) + 1` on
/// `[x0, b]`; outside those native domains both are continued by solving the
/// ODE with derivative jumps `2λ f m({x})` at speed atoms.
#[derive(Debug, Clone, Copy)]
pub struct EigenPair<'a> {
    model: &'a DiffusionModel,
}

impl<'a> EigenPair<'a> {
    pub(super) fn new(model: &'a DiffusionModel) -> Self {
        Self { model }
    }

    /// Closed-form expression of `φ`; equals `φ` on its native domain.
    pub fn increasing_formula(&self, x: f64) -> f64 {
        let m = self.model;
        m.wronskian * (m.target.put(x) - m.put_x0) + 1.0
    }

    /// Closed-form expression of `ϕ`; equals `ϕ` on its native domain.
    pub fn decreasing_formula(&self, x: f64) -> f64 {
        let m = self.model;
        m.wronskian * (m.target.call(x) - m.call_x0) + 1.0
    }

    /// Native domains `([a, x0], [x0, b])` of the closed forms.
    pub fn native_domains(&self) -> ((f64, f64), (f64, f64)) {
        let (lo, hi) = self.model.support();
        let x0 = self.model.x0;
        match self.model.start {
            StartPosition::LeftEnd => ((lo, lo), (lo, hi)),
            StartPosition::RightEnd => ((lo, hi), (hi, hi)),
            StartPosition::Interior => ((lo, x0), (x0, hi)),
        }
    }

    /// `φ(x)`, closed form where native, ODE continuation otherwise.
    pub fn increasing(&self, x: f64) -> Result<f64> {
        if x <= self.native_domains().0 .1 {
            Ok(self.increasing_formula(x))
        } else {
            self.extend(ExtensionSide::IncreasingAboveStart, x)
        }
    }

    /// `ϕ(x)`, closed form where native, ODE continuation otherwise.
    pub fn decreasing(&self, x: f64) -> Result<f64> {
        if x >= self.native_domains().1 .0 {
            Ok(self.decreasing_formula(x))
        } else {
            self.extend(ExtensionSide::DecreasingBelowStart, x)
        }
    }

    /// Continues one eigenfunction from the start point to `x` by adaptive
    /// RK4 on `f'' = 2λ ν f`, splitting at density breakpoints and applying
    /// derivative jumps at speed atoms.
    pub fn extend(&self, side: ExtensionSide, x: f64) -> Result<f64> {
        self.extend_with(side, x, |q, a, y, dy, b| integrate_adaptive(q, a, y, dy, b, EXTENSION_TOL))
    }

    /// Same continuation with fixed-step RK4 (`steps` per segment); used for
    /// convergence studies.
    pub fn extend_fixed(&self, side: ExtensionSide, x: f64, steps: usize) -> Result<f64> {
        self.extend_with(side, x, |q, a, y, dy, b| Ok(integrate_fixed(q, a, y, dy, b, steps)))
    }

    fn extend_with<S>(&self, side: ExtensionSide, x: f64, solve: S) -> Result<f64>
    where
        S: Fn(&dyn Fn(f64) -> f64, f64, f64, f64, f64) -> Result<(f64, f64)>,
    {
        let m = self.model;
        let (lo, hi) = m.support();
        if !(x >= lo && x <= hi) {
            return Err(Error::InvalidParameters(format!("x = {x} outside [{lo}, {hi}]")));
        }
        let x0 = m.x0;
        let w = m.wronskian;
        let target = &m.target;
        let (dy0, rightwards) = match side {
            ExtensionSide::IncreasingAboveStart => (w * target.cdf(x0), true),
            ExtensionSide::DecreasingBelowStart => (-w * (1.0 - target.cdf_left(x0)), false),
        };
        if x == x0 {
            return Ok(1.0);
        }
        if (x > x0) != rightwards {
            return Err(Error::InvalidParameters(format!("x = {x} is on the native side of the start")));
        }
        let mut stops: Vec<f64> = target
            .breakpoints()
            .into_iter()
            .filter(|&b| if rightwards { b > x0 && b < x } else { b < x0 && b > x })
            .collect();
        if !rightwards {
            stops.reverse();
        }
        stops.push(x);
        let coef = |y: f64| 2.0 * m.lambda * m.speed_density(y);
        let (mut pos, mut f, mut df) = (x0, 1.0, dy0);
        for stop in stops {
            (f, df) = solve(&coef, pos, f, df, stop)?;
            pos = stop;
            if stop != x {
                let jump = 2.0 * m.lambda * f * m.speed_atom_mass(stop);
                df += if rightwards { jump } else { -jump };
            }
            if !(f.abs() < 1e300) {
                return Err(Error::IntegrationOverflow(pos));
            }
        }
        Ok(f)
    }

    /// `ξ(x, y) = E_x[exp(-λ H_y)]`: `φ(x)/φ(y)` for `x <= y`, `ϕ(x)/ϕ(y)`
    /// otherwise.
    pub fn hitting_laplace(&self, x: f64, y: f64) -> Result<f64> {
        let (lo, hi) = self.model.support();
        for v in [x, y] {
            if !(v >= lo && v <= hi) {
                return Err(Error::InvalidParameters(format!("{v} outside [{lo}, {hi}]")));
            }
        }
        if x == y {
            return Ok(1.0);
        }
        let v = if x < y {
            self.increasing(x)? / self.increasing(y)?
        } else {
            self.decreasing(x)? / self.decreasing(y)?
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// One-sided derivatives `(φ'(x0-), ϕ'(x0+))` by finite differences.
    /// Their difference recovers `W (1 - μ({x0}))`.
    pub fn start_derivatives(&self) -> (f64, f64) {
        let x0 = self.model.x0;
        let h = FD_STEP * self.model.target.length_scale();
        (
            one_sided_derivative(&|y| self.increasing_formula(y), x0, -h),
            one_sided_derivative(&|y| self.decreasing_formula(y), x0, h),
        )
    }

    /// Measure reconstructed from one-sided eigenfunction derivatives:
    /// `γ([a, x)) = φ'(x-)/W` for `x <= x0`, `γ((x, b]) = -ϕ'(x+)/W` for
    /// `x >= x0`. Derivatives are taken by finite differences so that the
    /// reconstruction is independent of the target's CDF code path.
    pub fn representing_measure(&self, grid: &[f64]) -> RepresentingMeasure {
        let m = self.model;
        let w = m.wronskian;
        let scale = m.target.length_scale();
        let breaks = m.target.breakpoints();
        let x0 = m.x0;
        let use_increasing = |x: f64| match m.start {
            StartPosition::LeftEnd => false,
            StartPosition::RightEnd => true,
            StartPosition::Interior => x < x0,
        };
        let mut cdf_left = Vec::with_capacity(grid.len());
        let mut cdf = Vec::with_capacity(grid.len());
        for &x in grid {
            let is_atom = m.target.atom_mass(x) > 0.0;
            let left_inc = use_increasing(x) || (x == x0 && m.start == StartPosition::Interior);
            let right_inc = use_increasing(x) && !(x == x0 && m.start == StartPosition::Interior);
            let deriv = |inc: bool, dir: f64| {
                let h = stencil_step(x, dir, FD_STEP * scale, &breaks, is_atom);
                if inc {
                    one_sided_derivative(&|y| self.increasing_formula(y), x, h)
                } else {
                    one_sided_derivative(&|y| self.decreasing_formula(y), x, h)
                }
            };
            let to_cdf = |inc: bool, d: f64| if inc { d / w } else { 1.0 + d / w };
            cdf_left.push(to_cdf(left_inc, deriv(left_inc, -1.0)));
            cdf.push(to_cdf(right_inc, deriv(right_inc, 1.0)));
        }
        RepresentingMeasure { grid: grid.to_vec(), cdf_left, cdf, support: m.support() }
    }
}

/// Step for a one-sided stencil at `x` heading in direction `dir` that
/// avoids crossing breakpoints. Non-atom points may flip to the other side
/// (left and right derivatives coincide there).
fn stencil_step(x: f64, dir: f64, h: f64, breaks: &[f64], is_atom: bool) -> f64 {
    let clearance = |d: f64| {
        breaks
            .iter()
            .filter(|&&b| (b - x) * d > 0.0)
            .map(|&b| (b - x).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let reach = 4.5 * h;
    let here = clearance(dir);
    if here >= reach {
        return dir * h;
    }
    if !is_atom {
        let there = clearance(-dir);
        if there >= reach {
            return -dir * h;
        }
        if there > here {
            return -dir * (there / 4.5).max(1e-7 * h);
        }
    }
    dir * (here / 4.5).max(1e-7 * h)
}

/// Fourth-order one-sided difference using `x, x+h, ..., x+4h` (`h` may be
/// negative).
fn one_sided_derivative(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let v: [f64; 5] = std::array::from_fn(|k| f(x + h * k as f64));
    (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h)
}

/// CDF values of the representing measure on an evaluation grid.
#[derive(Debug, Clone)]
pub struct RepresentingMeasure {
    pub grid: Vec<f64>,
    /// `γ([a, x))`
    pub cdf_left: Vec<f64>,
    /// `γ([a, x])`
    pub cdf: Vec<f64>,
    support: (f64, f64),
}

impl RepresentingMeasure {
    /// Largest CDF gap to `mu` over the grid, both one-sided values included.
    pub fn kolmogorov_distance(&self, mu: &TargetMeasure) -> f64 {
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &x)| (self.cdf_left[i] - mu.cdf_left(x)).abs().max((self.cdf[i] - mu.cdf(x)).abs()))
            .fold(0.0, f64::max)
    }

    /// Piecewise-linear-CDF measure: constant density between grid points,
    /// atoms at CDF jumps, outside mass lumped onto the outermost grid points.
    pub fn to_target(&self) -> Result<TargetMeasure> {
        let n = self.grid.len();
        if n < 2 {
            return Err(Error::InvalidParameters("grid needs at least two points".into()));
        }
        let mut atoms = Vec::new();
        let mut pieces = Vec::new();
        for i in 0..n {
            let mut jump = (self.cdf[i] - self.cdf_left[i]).max(0.0);
            if i == 0 {
                jump += self.cdf_left[0].max(0.0);
            }
            if i + 1 == n {
                jump += (1.0 - self.cdf[n - 1]).max(0.0);
            }
            if jump > 1e-12 {
                atoms.push(Atom { x: self.grid[i], mass: jump });
            }
            if i + 1 < n {
                let (a, b) = (self.grid[i], self.grid[i + 1]);
                let mass = (self.cdf_left[i + 1] - self.cdf[i]).max(0.0);
                if mass > 0.0 {
                    let d = mass / (b - a);
                    pieces.push(DensityPiece::new(a, b, std::sync::Arc::new(move |_| d)));
                }
            }
        }
        let total: f64 =
            atoms.iter().map(|a| a.mass).sum::<f64>() + pieces.iter().map(|p| p.eval(p.lo) * (p.hi - p.lo)).sum::<f64>();
        for a in &mut atoms {
            a.mass /= total;
        }
        let pieces = pieces
            .into_iter()
            .map(|p| {
                let d = p.eval(p.lo) / total;
                DensityPiece::new(p.lo, p.hi, std::sync::Arc::new(move |_| d))
            })
            .collect();
        TargetMeasure::from_parts(pieces, atoms)
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }
}
