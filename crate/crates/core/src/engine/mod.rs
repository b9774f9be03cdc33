//! Monte Carlo engines for the terminal value `X_T` (`T ~ Exp(λ)`
//! independent of `X`) and for first-hitting-time transforms.
//!
//! Two independent engines are provided: an Euler–Maruyama stepper for
//! absolutely continuous speed measures and a birth–death chain obtained by
//! generator matching, which also handles sticky points. Every path owns a
//! generator seeded from the ChaCha stream keyed by `(seed, path index)`, so
//! results do not depend on how paths are scheduled across threads.

mod ctmc;
mod sde;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::{BoundaryClass, DiffusionModel};

pub use ctmc::{build_grid, build_grid_with, CtmcGrid, EndPolicy};

/// Restarts allowed per path before giving up.
const MAX_RESTARTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sde,
    Ctmc,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Sde => "sde",
            Engine::Ctmc => "ctmc",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sde" => Ok(Engine::Sde),
            "ctmc" => Ok(Engine::Ctmc),
            other => Err(Error::InvalidParameters(format!("unknown engine '{other}'"))),
        }
    }
}

/// Simulation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Euler step in model time units.
    pub dt: f64,
    /// Infinite supports are truncated at `quantile(q)` / `quantile(1-q)`.
    pub truncation_quantile: f64,
    /// Cap on simulated time for hitting problems; `None` means `40/λ`.
    pub max_horizon: Option<f64>,
    pub seed: u64,
    pub engine: Engine,
    /// Number of quantile sites for the birth–death chain.
    pub n_sites: usize,
    /// Forces `T = 0` on every path.
    #[serde(skip)]
    pub freeze_time: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            truncation_quantile: 1e-6,
            max_horizon: None,
            seed: 0,
            engine: Engine::Sde,
            n_sites: 400,
            freeze_time: false,
        }
    }
}

impl SimConfig {
    pub fn new(engine: Engine, n_paths: usize, seed: u64) -> Self {
        Self { engine, n_paths, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameters("n_paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::InvalidParameters(format!("dt = {} must lie in (0, 1e-2]", self.dt)));
        }
        if !(self.truncation_quantile > 0.0 && self.truncation_quantile <= 1e-3) {
            return Err(Error::InvalidParameters("truncation quantile must lie in (0, 1e-3]".into()));
        }
        if let Some(h) = self.max_horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidParameters("max_horizon must be positive".into()));
            }
        }
        if self.n_sites < 50 {
            return Err(Error::InvalidParameters("n_sites must be at least 50".into()));
        }
        Ok(())
    }

    pub fn horizon(&self, lambda: f64) -> f64 {
        self.max_horizon.unwrap_or(40.0 / lambda)
    }
}

/// Monte Carlo draws of `X_T`.
#[derive(Debug, Clone)]
pub struct TerminalSample {
    pub values: Vec<f64>,
    /// Paths that touched a truncation guard and were restarted.
    pub truncation_hits: u64,
    pub seed: u64,
    pub engine: Engine,
    pub wall_time_secs: f64,
}

impl TerminalSample {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn truncation_rate(&self) -> f64 {
        self.truncation_hits as f64 / self.values.len().max(1) as f64
    }
}

/// Generator for one path. The key is ChaCha8 with `seed` and stream id =
/// path index; its first 256 bits seed a Xoshiro256++ generator that does
/// the per-step work.
pub fn path_rng(seed: u64, path: u64) -> Xoshiro256PlusPlus {
    let mut key = ChaCha8Rng::seed_from_u64(seed);
    key.set_stream(path);
    Xoshiro256PlusPlus::from_rng(&mut key)
}

fn check_boundaries(model: &DiffusionModel) -> Result<()> {
    if model.boundaries().contains(&BoundaryClass::AbsorbingUnsupported) {
        return Err(Error::UnsupportedBoundary(
            "target charges an endpoint where the speed measure is infinite".into(),
        ));
    }
    Ok(())
}

/// Samples `X_T` for `cfg.n_paths` independent paths.
pub fn simulate_terminal(model: &DiffusionModel, cfg: &SimConfig) -> Result<TerminalSample> {
    cfg.validate()?;
    check_boundaries(model)?;
    let started = Instant::now();
    let results: Vec<Result<(f64, u32)>> = match cfg.engine {
        Engine::Sde => {
            let ctx = sde::SdeContext::new(model, cfg)?;
            (0..cfg.n_paths as u64)
                .into_par_iter()
                .map(|i| ctx.terminal(&mut path_rng(cfg.seed, i)))
                .collect()
        }
        Engine::Ctmc => {
            let grid = build_grid(model, cfg.n_sites, cfg)?;
            grid.simulator(model.lambda(), cfg.freeze_time).run(cfg.seed, cfg.n_paths)
        }
    };
    let mut values = Vec::with_capacity(cfg.n_paths);
    let mut hits = 0u64;
    for r in results {
        let (x, h) = r?;
        values.push(x);
        hits += h as u64;
    }
    Ok(TerminalSample {
        values,
        truncation_hits: hits,
        seed: cfg.seed,
        engine: cfg.engine,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo estimate of `E_start[exp(-λ H_level)]` and its standard error.
///
/// Paths run until they hit `level` or the horizon (default `40/λ`);
/// unfinished paths contribute zero.
pub fn simulate_hitting(model: &DiffusionModel, start: f64, level: f64, cfg: &SimConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_boundaries(model)?;
    let (lo, hi) = model.support();
    for v in [start, level] {
        if !(v > lo && v < hi) && !(v == model.x0()) {
            return Err(Error::InvalidParameters(format!("{v} is not inside ({lo}, {hi})")));
        }
    }
    if start == level {
        return Ok((1.0, 0.0));
    }
    let horizon = cfg.horizon(model.lambda());
    let draws: Vec<f64> = match cfg.engine {
        Engine::Sde => {
            let ctx = sde::SdeContext::new(model, cfg)?;
            (0..cfg.n_paths as u64)
                .into_par_iter()
                .map(|i| ctx.hitting(start, level, horizon, &mut path_rng(cfg.seed, i)))
                .collect()
        }
        Engine::Ctmc => {
            let grid = build_grid_with(model, cfg.n_sites, cfg.truncation_quantile, &[start, level])?;
            let (s, l) = (grid.index_of(start), grid.index_of(level));
            let (s, l) = match (s, l) {
                (Some(s), Some(l)) => (s, l),
                _ => return Err(Error::GridDegenerate("start or level not on the grid".into())),
            };
            (0..cfg.n_paths as u64)
                .into_par_iter()
                .map(|i| grid.hitting(s, l, model.lambda(), horizon, &mut path_rng(cfg.seed, i)))
                .collect()
        }
    };
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TargetMeasure;
    use crate::synthesis::synthesize;

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig { dt: 0.05, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { truncation_quantile: 0.01, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { n_sites: 10, ..SimConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frozen_time_returns_start() {
        let m = synthesize(&TargetMeasure::uniform(-1.0, 1.0).unwrap(), 0.25, 0.5, 1.0).unwrap();
        for engine in [Engine::Sde, Engine::Ctmc] {
            let cfg = SimConfig { freeze_time: true, ..SimConfig::new(engine, 200, 3) };
            let s = simulate_terminal(&m, &cfg).unwrap();
            assert!(s.values.iter().all(|&v| v == 0.25), "{engine:?}");
        }
    }

    #[test]
    fn reproducible_given_seed() {
        let m = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 1.5).unwrap();
        for engine in [Engine::Sde, Engine::Ctmc] {
            let cfg = SimConfig { dt: 1e-2, ..SimConfig::new(engine, 300, 11) };
            let a = simulate_terminal(&m, &cfg).unwrap();
            let b = simulate_terminal(&m, &cfg).unwrap();
            assert_eq!(a.values, b.values);
            let c = simulate_terminal(&m, &SimConfig { seed: 12, ..cfg }).unwrap();
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn sde_rejects_sticky_points() {
        let mu = TargetMeasure::from_samples(&[-1.0, 0.0, 1.0], None).unwrap();
        let m = synthesize(&mu, 0.0, 1.0, 1.0).unwrap();
        let err = simulate_terminal(&m, &SimConfig::new(Engine::Sde, 10, 0)).unwrap_err();
        assert_eq!(err.code(), "engine-mismatch");
    }

    #[test]
    fn absorbing_boundary_is_rejected() {
        let mu = TargetMeasure::from_samples(&[0.0, 1.0], None).unwrap();
        let m = synthesize(&mu, 0.5, 1.0, 4.0).unwrap();
        let err = simulate_terminal(&m, &SimConfig::new(Engine::Ctmc, 10, 0)).unwrap_err();
        assert_eq!(err.code(), "unsupported-boundary");
    }

    #[test]
    fn hitting_start_equals_level() {
        let m = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 2.0).unwrap();
        let r = simulate_hitting(&m, 0.7, 0.7, &SimConfig::default()).unwrap();
        assert_eq!(r, (1.0, 0.0));
    }

    #[test]
    fn reflecting_samples_stay_in_support() {
        let m = synthesize(&TargetMeasure::uniform(-1.0, 1.0).unwrap(), 0.5, 2.0, 1.0).unwrap();
        for engine in [Engine::Sde, Engine::Ctmc] {
            let s = simulate_terminal(&m, &SimConfig { dt: 1e-3, ..SimConfig::new(engine, 2000, 5) }).unwrap();
            assert!(s.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
