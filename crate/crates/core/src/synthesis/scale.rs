//! Transport of a target law through a scale function.
//!
//! If `Y` is a natural-scale diffusion consistent with the pushforward
//! `μ ∘ s⁻¹`, then `X = s⁻¹(Y)` is consistent with `μ` and has scale `s`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{Atom, DensityPiece, Family, TargetMeasure};

type MapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly increasing continuous map together with its inverse.
#[derive(Clone)]
pub struct ScaleMap {
    forward: MapFn,
    inverse: MapFn,
    affine: Option<(f64, f64)>,
}

impl std::fmt::Debug for ScaleMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.affine {
            Some((a, b)) => write!(f, "ScaleMap(x -> {a} x + {b})"),
            None => write!(f, "ScaleMap(<fn>)"),
        }
    }
}

impl ScaleMap {
    pub fn new<F, G>(forward: F, inverse: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { forward: Arc::new(forward), inverse: Arc::new(inverse), affine: None }
    }

    /// `x -> slope * x + shift`; closed-form families stay closed-form.
    pub fn affine(slope: f64, shift: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite() && shift.is_finite()) {
            return Err(Error::NonMonotoneMap(0.0));
        }
        Ok(Self {
            forward: Arc::new(move |x| slope * x + shift),
            inverse: Arc::new(move |y| (y - shift) / slope),
            affine: Some((slope, shift)),
        })
    }

    pub fn identity() -> Self {
        Self::affine(1.0, 0.0).expect("identity is affine")
    }

    pub fn forward(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (self.inverse)(y)
    }

    fn inverse_derivative(&self, y: f64) -> f64 {
        if let Some((slope, _)) = self.affine {
            return 1.0 / slope;
        }
        let h = 1e-3 * (1.0 + y.abs());
        let g = |k: f64| self.inverse(y + k * h);
        (g(-2.0) - 8.0 * g(-1.0) + 8.0 * g(1.0) - g(2.0)) / (12.0 * h)
    }
}

/// Maps natural-scale values back to the original coordinates.
#[derive(Debug, Clone)]
pub struct ScaleTransport {
    map: ScaleMap,
}

impl ScaleTransport {
    /// `x = s⁻¹(y)`.
    pub fn to_original(&self, y: f64) -> f64 {
        self.map.inverse(y)
    }

    /// `y = s(x)`.
    pub fn to_natural(&self, x: f64) -> f64 {
        self.map.forward(x)
    }

    pub fn map_samples(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.to_original(y)).collect()
    }
}

/// Pushes `mu` forward through `map`, returning the natural-scale target and
/// the transport back to the original coordinates.
pub fn apply_scale(mu: &TargetMeasure, map: &ScaleMap) -> Result<(TargetMeasure, ScaleTransport)> {
    check_monotone(mu, map)?;
    let transport = ScaleTransport { map: map.clone() };
    if let (Some(family), Some((a, b))) = (mu.family(), map.affine) {
        let pushed = match family {
            Family::Uniform { lo, hi } => Family::Uniform { lo: a * lo + b, hi: a * hi + b },
            Family::Laplace { rate, center } => Family::Laplace { rate: rate / a, center: a * center + b },
            Family::Gaussian { mean, sd } => Family::Gaussian { mean: a * mean + b, sd: a * sd },
        };
        return Ok((TargetMeasure::from_family(pushed)?, transport));
    }
    let atoms: Vec<Atom> = mu.atoms().iter().map(|at| Atom { x: map.forward(at.x), mass: at.mass }).collect();
    let pieces = mu
        .pieces()
        .iter()
        .map(|p| {
            let lo = map.forward(p.lo);
            let hi = map.forward(p.hi);
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::NonMonotoneMap(if lo.is_nan() { p.lo } else { p.hi }));
            }
            let f = p.density_fn().clone();
            let m = map.clone();
            Ok(DensityPiece::new(
                lo,
                hi,
                Arc::new(move |y: f64| {
                    let x = m.inverse(y);
                    f(x) * m.inverse_derivative(y)
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TargetMeasure::from_parts(pieces, atoms)?, transport))
}

fn check_monotone(mu: &TargetMeasure, map: &ScaleMap) -> Result<()> {
    let (lo, hi) = mu.support();
    let a = if lo.is_finite() { lo } else { mu.quantile(1e-9)? };
    let b = if hi.is_finite() { hi } else { mu.quantile(1.0 - 1e-9)? };
    let mut xs: Vec<f64> = if b > a { (0..=1000).map(|i| a + (b - a) * i as f64 / 1000.0).collect() } else { vec![a] };
    xs.extend(mu.atoms().iter().map(|at| at.x));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut prev = f64::NEG_INFINITY;
    for &x in &xs {
        let y = map.forward(x);
        if !(y > prev) || !y.is_finite() {
            return Err(Error::NonMonotoneMap(x));
        }
        let back = map.inverse(y);
        if !((back - x).abs() <= 1e-9 * (1.0 + x.abs())) {
            return Err(Error::NonMonotoneMap(x));
        }
        prev = y;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_leaves_measure_unchanged() {
        let mu = TargetMeasure::uniform(-1.0, 1.0).unwrap();
        let (nu, t) = apply_scale(&mu, &ScaleMap::identity()).unwrap();
        assert_eq!(nu.family(), mu.family());
        assert_eq!(t.to_original(0.3), 0.3);
    }

    #[test]
    fn linear_pushforward_of_uniform() {
        let mu = TargetMeasure::uniform(-1.0, 1.0).unwrap();
        let (nu, t) = apply_scale(&mu, &ScaleMap::affine(2.0, 0.0).unwrap()).unwrap();
        assert_eq!(nu.family(), Some(Family::Uniform { lo: -2.0, hi: 2.0 }));
        assert_eq!(t.to_original(1.0), 0.5);
    }

    #[test]
    fn cubic_fixes_atoms_at_zero_and_one() {
        let mu = TargetMeasure::from_samples(&[0.0, 1.0], None).unwrap();
        let cube = ScaleMap::new(|x: f64| x * x * x, |y: f64| y.cbrt());
        let (nu, _) = apply_scale(&mu, &cube).unwrap();
        assert_eq!(nu.atoms(), &[Atom { x: 0.0, mass: 0.5 }, Atom { x: 1.0, mass: 0.5 }]);
    }

    #[test]
    fn nonlinear_pushforward_preserves_law() {
        let mu = TargetMeasure::uniform(0.0, 1.0).unwrap();
        let sq = ScaleMap::new(|x: f64| x * x + x, |y: f64| 0.5 * (-1.0 + (1.0 + 4.0 * y).sqrt()));
        let (nu, t) = apply_scale(&mu, &sq).unwrap();
        assert_eq!(nu.support(), (0.0, 2.0));
        for &x in &[0.1, 0.4, 0.8] {
            assert!((nu.cdf(t.to_natural(x)) - mu.cdf(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn decreasing_map_rejected() {
        let mu = TargetMeasure::uniform(-1.0, 1.0).unwrap();
        let flip = ScaleMap::new(|x: f64| -x, |y: f64| -y);
        assert_eq!(apply_scale(&mu, &flip).unwrap_err().code(), "non-monotone-map");
        let square = ScaleMap::new(|x: f64| x * x, |y: f64| y.sqrt());
        assert_eq!(apply_scale(&mu, &square).unwrap_err().code(), "non-monotone-map");
    }
}
