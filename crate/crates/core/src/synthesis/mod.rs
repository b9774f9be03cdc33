//! Speed-measure synthesis for natural-scale diffusions.
//!
//! Given a target law `μ`, a start `x0`, a rate `λ` and a Wronskian `W`, the
//! speed measure on `(a, b)` is
//!
//! ```text
//! m(dx) = μ(dx) / (2λ (P(x) - P(x0) + 1/W))   for a < x <= x0
//! m(dx) = μ(dx) / (2λ (C(x) - C(x0) + 1/W))   for x0 <= x < b
//! ```
//!
//! and the diffusion stopped at an independent `Exp(λ)` time has law `μ`.

mod eigen;
mod scale;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, TargetMeasure};

pub use eigen::{EigenPair, ExtensionSide, RepresentingMeasure};
pub use scale::{apply_scale, ScaleMap, ScaleTransport};

/// Relative tolerance for the closed-form limit tests (boundary and
/// martingale classification).
pub const LIMIT_TOL: f64 = 1e-12;
/// Slack on `W <= W_max` absorbing round-off in caller-computed bounds.
const WRONSKIAN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryClass {
    Inaccessible,
    Reflecting,
    /// Accessible endpoint where the target places an atom and the speed
    /// measure becomes infinite: the path is absorbed there. Not simulated.
    AbsorbingUnsupported,
}

impl BoundaryClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryClass::Inaccessible => "inaccessible",
            BoundaryClass::Reflecting => "reflecting",
            BoundaryClass::AbsorbingUnsupported => "absorbing-unsupported",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inaccessible" => Ok(BoundaryClass::Inaccessible),
            "reflecting" => Ok(BoundaryClass::Reflecting),
            "absorbing-unsupported" => Ok(BoundaryClass::AbsorbingUnsupported),
            other => Err(Error::Parse(format!("unknown boundary class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MartingaleClass {
    Martingale,
    StrictLocalMartingale,
    NotApplicable,
}

impl MartingaleClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MartingaleClass::Martingale => "martingale",
            MartingaleClass::StrictLocalMartingale => "strict-local-martingale",
            MartingaleClass::NotApplicable => "not-applicable",
        }
    }
}

/// Where the diffusion starts relative to the target's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPosition {
    Interior,
    /// Start at the (finite) left endpoint: the call branch covers `[a, b)`.
    LeftEnd,
    /// Start at the (finite) right endpoint: the put branch covers `(a, b]`.
    RightEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Put,
    Call,
}

/// Largest admissible Wronskian, `1 / max(C(x0), P(x0))`.
///
/// Every `W` in `(0, W_max]` keeps both speed-measure denominators
/// non-negative; any larger `W` makes one of them negative near an endpoint.
pub fn wronskian_sup(target: &TargetMeasure, x0: f64) -> Result<f64> {
    check_start(target, x0)?;
    let p = target.potentials(x0)?;
    let worst = p.call.max(p.put);
    if worst <= 0.0 {
        return Err(Error::PointMassAtStart(x0));
    }
    Ok(1.0 / worst)
}

fn check_start(target: &TargetMeasure, x0: f64) -> Result<()> {
    let (lo, hi) = target.support();
    if !x0.is_finite() || x0 < lo || x0 > hi {
        return Err(Error::StartOutsideSupport { x0, lo, hi });
    }
    Ok(())
}

/// A synthesized natural-scale diffusion (no drift). Immutable; every
/// evaluator is a pure function of the stored parameters.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    target: TargetMeasure,
    x0: f64,
    lambda: f64,
    wronskian: f64,
    start: StartPosition,
    call_x0: f64,
    put_x0: f64,
    speed_atoms: Vec<Atom>,
    boundaries: [BoundaryClass; 2],
    speed_scale: f64,
}

/// Builds the diffusion whose value at an independent `Exp(lambda)` time
/// has law `target`.
pub fn synthesize(target: &TargetMeasure, x0: f64, lambda: f64, w: f64) -> Result<DiffusionModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameters(format!("lambda must be positive, got {lambda}")));
    }
    let w_max = wronskian_sup(target, x0)?;
    if !(w > 0.0 && w <= w_max * (1.0 + WRONSKIAN_SLACK)) {
        return Err(Error::WronskianOutOfRange { w, w_max });
    }
    let (lo, hi) = target.support();
    let start = if x0 == lo && lo < hi {
        StartPosition::LeftEnd
    } else if x0 == hi && lo < hi {
        StartPosition::RightEnd
    } else {
        StartPosition::Interior
    };
    let (call_x0, put_x0) = target.call_put(x0);
    let mut model = DiffusionModel {
        target: target.clone(),
        x0,
        lambda,
        wronskian: w,
        start,
        call_x0,
        put_x0,
        speed_atoms: Vec::new(),
        boundaries: [BoundaryClass::Reflecting; 2],
        speed_scale: 1.0,
    };
    model.speed_atoms = target
        .atoms()
        .iter()
        .map(|a| Atom { x: a.x, mass: model.speed_ratio(a.x) * a.mass })
        .collect();
    model.boundaries = [model.classify_boundary(Side::Left), model.classify_boundary(Side::Right)];
    Ok(model)
}

impl DiffusionModel {
    pub fn target(&self) -> &TargetMeasure {
        &self.target
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn wronskian(&self) -> f64 {
        self.wronskian
    }

    pub fn start_position(&self) -> StartPosition {
        self.start
    }

    pub fn support(&self) -> (f64, f64) {
        self.target.support()
    }

    pub fn speed_atoms(&self) -> &[Atom] {
        &self.speed_atoms
    }

    pub fn boundary(&self, side: Side) -> BoundaryClass {
        match side {
            Side::Left => self.boundaries[0],
            Side::Right => self.boundaries[1],
        }
    }

    pub fn boundaries(&self) -> [BoundaryClass; 2] {
        self.boundaries
    }

    /// Copy of the model whose speed density (and atoms) are multiplied by
    /// `factor`. Used to check that verification detects a wrong speed measure.
    pub fn with_speed_scale(&self, factor: f64) -> DiffusionModel {
        let mut m = self.clone();
        m.speed_scale *= factor;
        for a in &mut m.speed_atoms {
            a.mass *= factor;
        }
        m
    }

    fn branch(&self, x: f64) -> Branch {
        match self.start {
            StartPosition::LeftEnd => Branch::Call,
            StartPosition::RightEnd => Branch::Put,
            StartPosition::Interior => {
                if x < self.x0 {
                    Branch::Put
                } else {
                    Branch::Call
                }
            }
        }
    }

    /// Denominator `P(x) - P(x0) + 1/W` (left of the start) or
    /// `C(x) - C(x0) + 1/W` (right of it).
    pub fn denominator(&self, x: f64) -> f64 {
        match self.branch(x) {
            Branch::Put => self.target.put(x) - self.put_x0 + 1.0 / self.wronskian,
            Branch::Call => self.target.call(x) - self.call_x0 + 1.0 / self.wronskian,
        }
    }

    /// `m(dx) / μ(dx)` at `x`.
    fn speed_ratio(&self, x: f64) -> f64 {
        let d = self.denominator(x);
        if d <= 0.0 {
            f64::INFINITY
        } else {
            self.speed_scale / (2.0 * self.lambda * d)
        }
    }

    /// Speed density `ν(x)` of the absolutely continuous part of `m`.
    pub fn speed_density(&self, x: f64) -> f64 {
        let (lo, hi) = self.target.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let f = self.target.density(x);
        if f == 0.0 {
            return 0.0;
        }
        f * self.speed_ratio(x)
    }

    /// Mass of the speed atom at `x` (zero if none).
    pub fn speed_atom_mass(&self, x: f64) -> f64 {
        self.speed_atoms.iter().find(|a| a.x == x).map_or(0.0, |a| a.mass)
    }

    /// `σ²(x) = 1/ν(x)`; zero where `ν` is infinite, infinite where `ν = 0`.
    pub fn sigma_sq(&self, x: f64) -> f64 {
        let nu = self.speed_density(x);
        if nu == 0.0 {
            f64::INFINITY
        } else {
            1.0 / nu
        }
    }

    pub fn eigenfunctions(&self) -> EigenPair<'_> {
        EigenPair::new(self)
    }

    /// `E_x[exp(-λ H_y)]`.
    pub fn hitting_laplace(&self, x: f64, y: f64) -> Result<f64> {
        self.eigenfunctions().hitting_laplace(x, y)
    }

    /// Boundary behaviour at one end.
    ///
    /// Infinite ends are inaccessible. A finite end is inaccessible iff
    /// `∫ |b - x| m(dx)` diverges there, which in natural scale happens
    /// exactly when the limiting denominator vanishes; otherwise the end is
    /// reached in finite time and the path reflects.
    pub fn classify_boundary(&self, side: Side) -> BoundaryClass {
        let (lo, hi) = self.target.support();
        let (end, starts_here, limit) = match side {
            Side::Left => (lo, self.start == StartPosition::LeftEnd, 1.0 / self.wronskian - self.put_x0),
            Side::Right => (hi, self.start == StartPosition::RightEnd, 1.0 / self.wronskian - self.call_x0),
        };
        if !end.is_finite() {
            return BoundaryClass::Inaccessible;
        }
        if starts_here {
            return BoundaryClass::Reflecting;
        }
        if limit * self.wronskian <= LIMIT_TOL {
            if self.target.atom_mass(end) > 0.0 {
                BoundaryClass::AbsorbingUnsupported
            } else {
                BoundaryClass::Inaccessible
            }
        } else {
            BoundaryClass::Reflecting
        }
    }

    /// Martingale / strict-local-martingale dichotomy.
    ///
    /// At an infinite right end the decreasing eigenfunction tends to
    /// `1 - W C(x0)`; the diffusion is a true martingale iff every infinite
    /// end has a vanishing limit. With two finite ends the question does not
    /// apply.
    pub fn martingale_class(&self) -> MartingaleClass {
        let (lo, hi) = self.target.support();
        let mut limits = Vec::with_capacity(2);
        if hi.is_infinite() {
            limits.push(1.0 - self.wronskian * self.call_x0);
        }
        if lo.is_infinite() {
            limits.push(1.0 - self.wronskian * self.put_x0);
        }
        if limits.is_empty() {
            MartingaleClass::NotApplicable
        } else if limits.iter().all(|l| l.abs() <= LIMIT_TOL) {
            MartingaleClass::Martingale
        } else {
            MartingaleClass::StrictLocalMartingale
        }
    }

    /// Truncated simulation range `[quantile(q), quantile(1-q)]` clipped to
    /// the support (finite ends are kept exactly).
    pub fn truncated_range(&self, q: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.target.support();
        let a = if lo.is_finite() { lo } else { self.target.quantile(q)? };
        let b = if hi.is_finite() { hi } else { self.target.quantile(1.0 - q)? };
        Ok((a.min(self.x0), b.max(self.x0)))
    }
}
