//! Target probability measures on an interval and their potential functions.
//!
//! A measure is a finite list of density pieces plus a finite list of atoms.
//! The built-in families carry a closed-form tag so that potentials, CDF and
//! quantiles are evaluated exactly; everything else falls back to adaptive
//! quadrature and exact atom sums.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

const QUAD_TOL: f64 = 1e-10;
const MASS_TOL_EXACT: f64 = 1e-12;
const MASS_TOL_QUADRATURE: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-9;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in families with exact potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Uniform { lo: f64, hi: f64 },
    /// Two-sided exponential, density `rate/2 * exp(-rate |x - center|)`.
    Laplace { rate: f64, center: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Uniform { .. } => "uniform",
            Family::Laplace { .. } => "laplace",
            Family::Gaussian { .. } => "gaussian",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Uniform { lo, hi } => vec![lo, hi],
            Family::Laplace { rate, center } => vec![rate, center],
            Family::Gaussian { mean, sd } => vec![mean, sd],
        }
    }

    /// Parses a family tag and its parameter list.
    ///
    /// `uniform:a,b`, `laplace:rate[,center]` (alias `two-sided-exponential`),
    /// `gaussian:sd` or `gaussian:mean,sd` (alias `normal`).
    pub fn from_tag(kind: &str, params: &[f64]) -> Result<Family> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameters("parameters must be finite".into()));
        }
        let family = match kind {
            "uniform" => match params {
                [lo, hi] => Family::Uniform { lo: *lo, hi: *hi },
                _ => return Err(Error::InvalidParameters("uniform takes lo,hi".into())),
            },
            "laplace" | "two-sided-exponential" => match params {
                [rate] => Family::Laplace { rate: *rate, center: 0.0 },
                [rate, center] => Family::Laplace { rate: *rate, center: *center },
                _ => return Err(Error::InvalidParameters("laplace takes rate[,center]".into())),
            },
            "gaussian" | "normal" => match params {
                [sd] => Family::Gaussian { mean: 0.0, sd: *sd },
                [mean, sd] => Family::Gaussian { mean: *mean, sd: *sd },
                _ => return Err(Error::InvalidParameters("gaussian takes [mean,]sd".into())),
            },
            other => return Err(Error::InvalidParameters(format!("unknown family '{other}'"))),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Uniform { lo, hi } => lo < hi,
            Family::Laplace { rate, .. } => rate > 0.0,
            Family::Gaussian { sd, .. } => sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!("{self:?}")))
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Family::Uniform { lo, hi } => (lo, hi),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn density(&self, x: f64) -> f64 {
        match *self {
            Family::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Family::Laplace { rate, center } => 0.5 * rate * (-rate * (x - center).abs()).exp(),
            Family::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Laplace { rate, center } => {
                if x < center {
                    0.5 * (rate * (x - center)).exp()
                } else {
                    1.0 - 0.5 * (-rate * (x - center)).exp()
                }
            }
            Family::Gaussian { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::Uniform { lo, hi } => lo + p * (hi - lo),
            Family::Laplace { rate, center } => {
                if p < 0.5 {
                    center + (2.0 * p).ln() / rate
                } else {
                    center - (2.0 * (1.0 - p)).ln() / rate
                }
            }
            Family::Gaussian { mean, sd } => {
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    // Tail quantile of N(0, 1), polished by Newton steps on
                    // the tail probability.
                    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
                    let mut z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
                    for _ in 0..2 {
                        let tail = 0.5 * erfc(z / std::f64::consts::SQRT_2);
                        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                        if pdf > 0.0 {
                            z += (tail - q) / pdf;
                        }
                    }
                    mean + sign * sd * z
                }
            }
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Laplace { center, .. } => center,
            Family::Gaussian { mean, .. } => mean,
        }
    }

    /// Exact `(C(x), P(x))`.
    fn call_put(&self, x: f64) -> (f64, f64) {
        match *self {
            Family::Uniform { lo, hi } => {
                let mean = 0.5 * (lo + hi);
                if x <= lo {
                    (mean - x, 0.0)
                } else if x >= hi {
                    (0.0, x - mean)
                } else {
                    let w = 2.0 * (hi - lo);
                    ((hi - x) * (hi - x) / w, (x - lo) * (x - lo) / w)
                }
            }
            Family::Laplace { rate, center } => {
                if x >= center {
                    let c = (-rate * (x - center)).exp() / (2.0 * rate);
                    (c, c + (x - center))
                } else {
                    let p = (-rate * (center - x)).exp() / (2.0 * rate);
                    (p + (center - x), p)
                }
            }
            Family::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let upper = 0.5 * erfc(z / std::f64::consts::SQRT_2);
                let lower = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
                (sd * (pdf - z * upper), sd * (pdf + z * lower))
            }
        }
    }
}

/// A point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

/// Absolutely continuous part of a measure on `[lo, hi]`.
#[derive(Clone)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    density: DensityFn,
}

impl DensityPiece {
    pub fn new(lo: f64, hi: f64, density: DensityFn) -> Self {
        Self { lo, hi, density }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            (self.density)(x)
        } else {
            0.0
        }
    }

    pub fn density_fn(&self) -> &DensityFn {
        &self.density
    }
}

impl fmt::Debug for DensityPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityPiece[{}, {}]", self.lo, self.hi)
    }
}

/// `C(x) = ∫(y-x)⁺ μ(dy)`, `P(x) = ∫(x-y)⁺ μ(dy)` and `U = C + P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialTriple {
    pub call: f64,
    pub put: f64,
    pub u: f64,
}

/// Sorted atoms with prefix sums of mass and first moment.
#[derive(Debug, Clone, Default)]
struct AtomTable {
    atoms: Vec<Atom>,
    cum_mass: Vec<f64>,
    cum_moment: Vec<f64>,
}

impl AtomTable {
    fn new(atoms: Vec<Atom>) -> Self {
        let mut cum_mass = Vec::with_capacity(atoms.len() + 1);
        let mut cum_moment = Vec::with_capacity(atoms.len() + 1);
        let (mut m, mut xm) = (0.0, 0.0);
        cum_mass.push(0.0);
        cum_moment.push(0.0);
        for a in &atoms {
            m += a.mass;
            xm += a.mass * a.x;
            cum_mass.push(m);
            cum_moment.push(xm);
        }
        Self { atoms, cum_mass, cum_moment }
    }

    /// Number of atoms with location `<= x`.
    fn count_le(&self, x: f64) -> usize {
        self.atoms.partition_point(|a| a.x <= x)
    }

    fn count_lt(&self, x: f64) -> usize {
        self.atoms.partition_point(|a| a.x < x)
    }

    fn mass_le(&self, x: f64) -> f64 {
        self.cum_mass[self.count_le(x)]
    }

    fn mass_lt(&self, x: f64) -> f64 {
        self.cum_mass[self.count_lt(x)]
    }

    fn call_put(&self, x: f64) -> (f64, f64) {
        let k = self.count_le(x);
        let n = self.atoms.len();
        let (m_lo, xm_lo) = (self.cum_mass[k], self.cum_moment[k]);
        let (m_hi, xm_hi) = (self.cum_mass[n] - m_lo, self.cum_moment[n] - xm_lo);
        ((xm_hi - x * m_hi).max(0.0), (x * m_lo - xm_lo).max(0.0))
    }
}

/// A probability law on `[lo, hi]` (endpoints may be infinite).
///
/// Immutable after construction.
#[derive(Clone)]
pub struct TargetMeasure {
    lo: f64,
    hi: f64,
    pieces: Vec<DensityPiece>,
    atoms: AtomTable,
    family: Option<Family>,
}

impl fmt::Debug for TargetMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetMeasure")
            .field("support", &(self.lo, self.hi))
            .field("pieces", &self.pieces)
            .field("atoms", &self.atoms.atoms)
            .field("family", &self.family)
            .finish()
    }
}

impl TargetMeasure {
    pub fn from_family(family: Family) -> Result<Self> {
        family.validate()?;
        let dens = move |x: f64| family.density(x);
        let pieces = match family {
            Family::Laplace { center, .. } => vec![
                DensityPiece::new(f64::NEG_INFINITY, center, Arc::new(dens)),
                DensityPiece::new(center, f64::INFINITY, Arc::new(dens)),
            ],
            _ => {
                let (lo, hi) = family.support();
                vec![DensityPiece::new(lo, hi, Arc::new(dens))]
            }
        };
        let (lo, hi) = family.support();
        Ok(Self { lo, hi, pieces, atoms: AtomTable::default(), family: Some(family) })
    }

    /// Builds a built-in family from its tag and parameter list.
    pub fn builtin(kind: &str, params: &[f64]) -> Result<Self> {
        Self::from_family(Family::from_tag(kind, params)?)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::from_family(Family::Uniform { lo, hi })
    }

    pub fn laplace(rate: f64) -> Result<Self> {
        Self::from_family(Family::Laplace { rate, center: 0.0 })
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        Self::from_family(Family::Gaussian { mean, sd })
    }

    /// Empirical measure: coincident values are merged (exact equality),
    /// weights are normalized to one.
    pub fn from_samples(values: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(w) = weights {
            if w.len() != values.len() {
                return Err(Error::InvalidParameters("weights and values differ in length".into()));
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameters("weights must be positive".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("sample values must be finite".into()));
        }
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, weights.map_or(1.0, |w| w[i])))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut atoms: Vec<Atom> = Vec::new();
        for (x, w) in pairs {
            match atoms.last_mut() {
                Some(last) if last.x == x => last.mass += w,
                _ => atoms.push(Atom { x, mass: w }),
            }
        }
        for a in &mut atoms {
            a.mass /= total;
        }
        Self::from_parts(Vec::new(), atoms)
    }

    /// Measure whose call potential interpolates a single-expiry call curve.
    ///
    /// The price curve must be non-increasing and convex; violations up to
    /// 1e-9 are repaired by projecting onto the lower convex hull, larger
    /// ones are rejected. A piecewise-linear call potential corresponds to
    /// a purely atomic measure with atoms at the strikes.
    pub fn from_call_prices(strikes: &[f64], prices: &[f64]) -> Result<Self> {
        if strikes.len() != prices.len() {
            return Err(Error::InvalidParameters("strikes and prices differ in length".into()));
        }
        if strikes.len() < 3 {
            return Err(Error::InsufficientPoints(strikes.len()));
        }
        if strikes.windows(2).any(|w| !(w[1] > w[0])) || strikes.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidParameters("strikes must be finite and strictly increasing".into()));
        }
        if prices.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameters("prices must be finite and non-negative".into()));
        }
        for (i, w) in prices.windows(2).enumerate() {
            if w[1] > w[0] + PRICE_TOL {
                return Err(Error::ArbitrageViolation(format!(
                    "price increases between strikes {} and {}",
                    strikes[i],
                    strikes[i + 1]
                )));
            }
        }
        let hull = lower_convex_hull(strikes, prices);
        let gap = prices.iter().zip(&hull).map(|(c, h)| c - h).fold(0.0, f64::max);
        if gap > PRICE_TOL {
            return Err(Error::ArbitrageViolation(format!("price curve not convex (gap {gap:.3e})")));
        }
        let c = hull;
        let n = strikes.len() - 1;
        let mut slopes: Vec<f64> = (0..n)
            .map(|i| ((c[i + 1] - c[i]) / (strikes[i + 1] - strikes[i])).min(0.0))
            .collect();
        for i in 1..n {
            if slopes[i] < slopes[i - 1] {
                slopes[i] = slopes[i - 1];
            }
        }
        if slopes[0] < -1.0 - PRICE_TOL {
            return Err(Error::ArbitrageViolation(format!("call slope {} below -1", slopes[0])));
        }
        slopes[0] = slopes[0].max(-1.0);
        let tail = -slopes[n - 1];
        if tail <= 0.0 && c[n] > PRICE_TOL {
            return Err(Error::ArbitrageViolation("flat positive call tail".into()));
        }
        let mut atoms = vec![Atom { x: strikes[0], mass: 1.0 + slopes[0] }];
        for i in 1..n {
            atoms.push(Atom { x: strikes[i], mass: slopes[i] - slopes[i - 1] });
        }
        let last = if c[n] > 0.0 && tail > 0.0 { strikes[n] + c[n] / tail } else { strikes[n] };
        atoms.push(Atom { x: last, mass: tail });
        atoms.retain(|a| a.mass > 1e-12);
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        for a in &mut atoms {
            a.mass /= total;
        }
        Self::from_parts(Vec::new(), atoms)
    }

    /// General constructor from density pieces and atoms.
    ///
    /// Pieces must be ordered and non-overlapping; atoms must have positive
    /// mass. The support is shrunk to the smallest interval carrying mass.
    pub fn from_parts(pieces: Vec<DensityPiece>, mut atoms: Vec<Atom>) -> Result<Self> {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        if atoms.iter().any(|a| !(a.mass > 0.0) || !a.x.is_finite()) {
            return Err(Error::InvalidParameters("atoms need finite location and positive mass".into()));
        }
        if atoms.windows(2).any(|w| w[0].x == w[1].x) {
            return Err(Error::InvalidParameters("atom locations must be distinct".into()));
        }
        if pieces.windows(2).any(|w| w[1].lo < w[0].hi) || pieces.iter().any(|p| !(p.lo < p.hi)) {
            return Err(Error::InvalidParameters("density pieces must be ordered and disjoint".into()));
        }
        let density_mass: f64 = pieces.iter().map(|p| integrate(|x| p.eval(x), p.lo, p.hi, 1e-12)).sum();
        let atom_mass: f64 = atoms.iter().map(|a| a.mass).sum();
        let tol = if pieces.is_empty() { MASS_TOL_EXACT } else { MASS_TOL_QUADRATURE };
        if ((density_mass + atom_mass) - 1.0).abs() > tol {
            return Err(Error::InvalidParameters(format!(
                "total mass {} differs from one",
                density_mass + atom_mass
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &pieces {
            lo = lo.min(p.lo);
            hi = hi.max(p.hi);
        }
        if let (Some(first), Some(last)) = (atoms.first(), atoms.last()) {
            lo = lo.min(first.x);
            hi = hi.max(last.x);
        }
        Ok(Self { lo, hi, pieces, atoms: AtomTable::new(atoms), family: None })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.atoms.is_empty()
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Density of the absolutely continuous part.
    pub fn density(&self, x: f64) -> f64 {
        if let Some(f) = self.family {
            return f.density(x);
        }
        self.pieces.iter().find(|p| x >= p.lo && x <= p.hi).map_or(0.0, |p| p.eval(x))
    }

    /// Mass of the atom at exactly `x` (zero if none).
    pub fn atom_mass(&self, x: f64) -> f64 {
        let k = self.atoms.count_lt(x);
        match self.atoms.atoms.get(k) {
            Some(a) if a.x == x => a.mass,
            _ => 0.0,
        }
    }

    /// Finite density-piece endpoints and atom locations, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .chain(self.atoms.atoms.iter().map(|a| a.x))
            .filter(|x| x.is_finite())
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `μ((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        if let Some(f) = self.family {
            return f.cdf(x);
        }
        (self.continuous_cdf(x) + self.atoms.mass_le(x)).clamp(0.0, 1.0)
    }

    /// `μ((-∞, x))`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        if let Some(f) = self.family {
            return f.cdf(x);
        }
        (self.continuous_cdf(x) + self.atoms.mass_lt(x)).clamp(0.0, 1.0)
    }

    fn continuous_cdf(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                if x <= p.lo {
                    0.0
                } else {
                    integrate(|y| p.eval(y), p.lo, x.min(p.hi), QUAD_TOL)
                }
            })
            .sum()
    }

    /// Generalized inverse `inf { x : F(x) >= p }`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameters(format!("quantile level {p} outside [0, 1]")));
        }
        if let Some(f) = self.family {
            return Ok(f.quantile(p));
        }
        if p == 0.0 {
            return Ok(self.lo);
        }
        if self.pieces.is_empty() {
            let k = self.atoms.cum_mass.partition_point(|&m| m < p * (1.0 - 1e-15));
            let idx = k.saturating_sub(1).min(self.atoms.atoms.len() - 1);
            return Ok(self.atoms.atoms[idx].x);
        }
        let (mut a, mut b) = (self.lo, self.hi);
        if !a.is_finite() {
            a = -1.0;
            while self.cdf(a) >= p {
                a *= 2.0;
                if a < -1e300 {
                    return Ok(f64::NEG_INFINITY);
                }
            }
        }
        if !b.is_finite() {
            b = 1.0;
            while self.cdf(b) < p {
                b *= 2.0;
                if b > 1e300 {
                    return Ok(f64::INFINITY);
                }
            }
        }
        if self.cdf(a) >= p {
            return Ok(a);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.cdf(m) >= p {
                b = m;
            } else {
                a = m;
            }
        }
        // Snap to an atom when the bracket collapsed onto it.
        for atom in &self.atoms.atoms {
            if (atom.x - b).abs() <= 1e-12 * (1.0 + b.abs()) {
                return Ok(atom.x);
            }
        }
        Ok(b)
    }

    /// Mean of the measure.
    pub fn mean(&self) -> Result<f64> {
        if let Some(f) = self.family {
            return Ok(f.mean());
        }
        let cont: f64 = self
            .pieces
            .iter()
            .map(|p| integrate(|y| y * p.eval(y), p.lo, p.hi, QUAD_TOL))
            .sum();
        let atoms = *self.atoms.cum_moment.last().unwrap();
        let m = cont + atoms;
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::UndefinedMean)
        }
    }

    /// Call, put and absolute-value potentials at `x`.
    pub fn potentials(&self, x: f64) -> Result<PotentialTriple> {
        if !x.is_finite() {
            return Err(Error::NonfinitePotential(x));
        }
        let (call, put) = self.call_put(x);
        if !(call.is_finite() && put.is_finite()) {
            return Err(Error::NonfinitePotential(x));
        }
        Ok(PotentialTriple { call, put, u: call + put })
    }

    /// `(C(x), P(x))` without error wrapping; may be non-finite.
    pub fn call_put(&self, x: f64) -> (f64, f64) {
        if let Some(f) = self.family {
            return f.call_put(x);
        }
        let (mut call, mut put) = self.atoms.call_put(x);
        for p in &self.pieces {
            if p.hi > x {
                call += integrate(|y| (y - x) * p.eval(y), p.lo.max(x), p.hi, QUAD_TOL);
            }
            if p.lo < x {
                put += integrate(|y| (x - y) * p.eval(y), p.lo, p.hi.min(x), QUAD_TOL);
            }
        }
        (call, put)
    }

    pub fn call(&self, x: f64) -> f64 {
        self.call_put(x).0
    }

    pub fn put(&self, x: f64) -> f64 {
        self.call_put(x).1
    }

    /// Interquartile range, used as a natural length scale.
    pub fn length_scale(&self) -> f64 {
        let q1 = self.quantile(0.25).unwrap_or(0.0);
        let q3 = self.quantile(0.75).unwrap_or(1.0);
        let iqr = q3 - q1;
        if iqr > 0.0 && iqr.is_finite() {
            iqr
        } else {
            let (lo, hi) = (self.lo, self.hi);
            if hi > lo && (hi - lo).is_finite() {
                hi - lo
            } else {
                1.0
            }
        }
    }

    /// Reads one value per line with an optional second weight column.
    /// Blank lines, `#` comments and a non-numeric header are skipped.
    pub fn from_samples_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows = parse_numeric_rows(&text)?;
        let values: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let weighted = rows.iter().any(|r| r.len() > 1);
        if weighted && rows.iter().any(|r| r.len() < 2) {
            return Err(Error::Parse("weight column present on some rows only".into()));
        }
        let weights: Vec<f64> = rows.iter().filter_map(|r| r.get(1).copied()).collect();
        Self::from_samples(&values, weighted.then_some(weights.as_slice()))
    }

    /// Reads a `strike,price` CSV.
    pub fn from_call_prices_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows = parse_numeric_rows(&text)?;
        if rows.iter().any(|r| r.len() != 2) {
            return Err(Error::Parse("expected two columns: strike,price".into()));
        }
        let strikes: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let prices: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        Self::from_call_prices(&strikes, &prices)
    }
}

fn parse_numeric_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match fields {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
        }
    }
    Ok(rows)
}

/// Lower convex hull of `(x_i, y_i)` evaluated back at every `x_i`.
fn lower_convex_hull(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut seg = 0;
    for i in 0..xs.len() {
        while seg + 1 < hull.len() - 1 && xs[hull[seg + 1]] < xs[i] {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        if a == b || i == a {
            out.push(ys[a]);
        } else {
            let t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
            out.push(ys[a] + t * (ys[b] - ys[a]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn uniform_potentials_at_center() {
        let mu = TargetMeasure::uniform(-1.0, 1.0).unwrap();
        let p = mu.potentials(0.0).unwrap();
        assert_eq!((p.call, p.put, p.u), (0.25, 0.25, 0.5));
        assert_eq!(mu.mean().unwrap(), 0.0);
        assert_eq!(mu.quantile(0.75).unwrap(), 0.5);
    }

    #[test]
    fn laplace_potential_matches_wronskian_bound() {
        let lambda: f64 = 0.7;
        let rate = (2.0 * lambda).sqrt();
        let mu = TargetMeasure::laplace(rate).unwrap();
        let p = mu.potentials(0.0).unwrap();
        assert!(close(p.call, 1.0 / (2.0 * rate), 1e-15));
        assert!(close(p.put, 1.0 / (2.0 * rate), 1e-15));
        assert_eq!(TargetMeasure::laplace(1.0).unwrap().cdf(0.0), 0.5);
    }

    #[test]
    fn degenerate_uniform_rejected() {
        let err = TargetMeasure::builtin("uniform", &[0.0, 0.0]).unwrap_err();
        assert_eq!(err.code(), "invalid-parameters");
        assert!(TargetMeasure::builtin("laplace", &[-1.0]).is_err());
        assert!(TargetMeasure::builtin("gaussian", &[0.0, 0.0]).is_err());
        assert!(TargetMeasure::builtin("cauchy", &[1.0]).is_err());
    }

    #[test]
    fn samples_merge_and_normalize() {
        let mu = TargetMeasure::from_samples(&[0.5, 0.5, 1.0], None).unwrap();
        assert_eq!(mu.atoms().len(), 2);
        assert!(close(mu.atoms()[0].mass, 2.0 / 3.0, 1e-15));
        assert!(close(mu.atoms()[1].mass, 1.0 / 3.0, 1e-15));

        let point = TargetMeasure::from_samples(&[3.0], None).unwrap();
        assert_eq!(point.atoms(), &[Atom { x: 3.0, mass: 1.0 }]);
        assert_eq!(point.support(), (3.0, 3.0));

        let w = TargetMeasure::from_samples(&[1.0, 2.0], Some(&[1.0, 3.0])).unwrap();
        assert_eq!(w.atoms(), &[Atom { x: 1.0, mass: 0.25 }, Atom { x: 2.0, mass: 0.75 }]);
        assert_eq!(w.mean().unwrap(), 1.75);

        assert_eq!(TargetMeasure::from_samples(&[], None).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn call_prices_recover_atoms() {
        let mu = TargetMeasure::from_call_prices(&[0.0, 1.0, 2.0], &[1.0, 0.25, 0.0]).unwrap();
        // Oracle: second finite difference of the price curve.
        let strikes = [0.0, 1.0, 2.0];
        let prices = [1.0, 0.25, 0.0];
        let s0 = (prices[1] - prices[0]) / (strikes[1] - strikes[0]);
        let s1 = (prices[2] - prices[1]) / (strikes[2] - strikes[1]);
        assert_eq!(mu.atom_mass(1.0), s1 - s0);
        assert_eq!(mu.atom_mass(0.0), 1.0 + s0);
        assert_eq!(mu.atom_mass(2.0), -s1);
        for (k, c) in strikes.iter().zip(prices) {
            assert!(close(mu.call(*k), c, 1e-14));
        }
    }

    #[test]
    fn call_prices_with_positive_last_price() {
        let strikes = [0.0, 1.0, 2.0, 3.0];
        let prices = [1.5, 0.7, 0.3, 0.1];
        let mu = TargetMeasure::from_call_prices(&strikes, &prices).unwrap();
        for (k, c) in strikes.iter().zip(prices) {
            assert!(close(mu.call(*k), c, 1e-13), "{k}: {} vs {c}", mu.call(*k));
        }
    }

    #[test]
    fn call_price_violations() {
        let e = TargetMeasure::from_call_prices(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap_err();
        assert_eq!(e.code(), "arbitrage-violation");
        let e = TargetMeasure::from_call_prices(&[0.0, 2.0], &[1.0, 0.0]).unwrap_err();
        assert_eq!(e.code(), "insufficient-points");
        // concave kink well above tolerance
        let e = TargetMeasure::from_call_prices(&[0.0, 1.0, 2.0], &[1.0, 0.9, 0.0]).unwrap_err();
        assert_eq!(e.code(), "arbitrage-violation");
        // tiny violation is repaired
        let mu = TargetMeasure::from_call_prices(&[0.0, 1.0, 2.0], &[1.0, 0.5 + 1e-11, 0.0]).unwrap();
        assert!(close(mu.atom_mass(0.0), 0.5, 1e-9));
    }

    #[test]
    fn generic_quadrature_matches_closed_forms() {
        for family in [
            Family::Uniform { lo: -1.0, hi: 2.0 },
            Family::Laplace { rate: 1.3, center: 0.4 },
            Family::Gaussian { mean: -0.2, sd: 0.8 },
        ] {
            let exact = TargetMeasure::from_family(family).unwrap();
            let generic = TargetMeasure::from_parts(exact.pieces().to_vec(), vec![]).unwrap();
            for &x in &[-1.5, -0.3, 0.0, 0.4, 1.1, 2.5] {
                let (c1, p1) = exact.call_put(x);
                let (c2, p2) = generic.call_put(x);
                assert!(close(c2, c1, 1e-8), "{family:?} C({x}) {c2} vs {c1}");
                assert!(close(p2, p1, 1e-8), "{family:?} P({x}) {p2} vs {p1}");
                assert!(close(generic.cdf(x), exact.cdf(x), 1e-9));
            }
            assert!(close(generic.mean().unwrap(), exact.mean().unwrap(), 1e-8));
            for &p in &[0.1, 0.5, 0.9] {
                assert!(close(generic.quantile(p).unwrap(), exact.quantile(p).unwrap(), 1e-8));
            }
        }
    }

    #[test]
    fn atomic_quantiles_and_cdf_limits() {
        let mu = TargetMeasure::from_samples(&[1.0, 2.0], Some(&[1.0, 3.0])).unwrap();
        assert_eq!(mu.quantile(0.1).unwrap(), 1.0);
        assert_eq!(mu.quantile(0.25).unwrap(), 1.0);
        assert_eq!(mu.quantile(0.26).unwrap(), 2.0);
        assert_eq!(mu.cdf_left(2.0), 0.25);
        assert_eq!(mu.cdf(2.0), 1.0);
    }

    #[test]
    fn csv_ingestion() {
        let dir = std::env::temp_dir().join(format!("speedsynth-measure-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let s = dir.join("s.csv");
        std::fs::write(&s, "value,weight\n1,1\n2,3\n").unwrap();
        let mu = TargetMeasure::from_samples_csv(&s).unwrap();
        assert_eq!(mu.atom_mass(2.0), 0.75);
        let c = dir.join("c.csv");
        std::fs::write(&c, "strike,price\n0,1\n1,0.25\n2,0\n").unwrap();
        let mu = TargetMeasure::from_call_prices_csv(&c).unwrap();
        assert_eq!(mu.atom_mass(1.0), 0.5);
        std::fs::remove_dir_all(&dir).ok();
    }
}
