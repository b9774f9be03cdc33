//! Distances between simulated terminal values and the target, analytic
//! identity checks, and the consolidated consistency report.

use serde::{Deserialize, Serialize};

use crate::engine::{simulate_terminal, Engine, SimConfig, TerminalSample};
use crate::error::{Error, Result};
use crate::io::model_hash;
use crate::measure::TargetMeasure;
use crate::synthesis::DiffusionModel;

/// Asymptotic 1% Kolmogorov–Smirnov coefficient.
pub const KS_ONE_PERCENT: f64 = 1.628;
const W1_GRID: usize = 10_000;
const RESIDUAL_STEP: f64 = 1e-3;
const RESIDUAL_POINTS: usize = 2001;

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup |F_n - F|`, evaluated at every sample point and every atom of `mu`,
/// using both one-sided limits at each.
pub fn ks_distance(samples: &[f64], mu: &TargetMeasure) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut worst: f64 = 0.0;
    let mut check = |x: f64| {
        let below = xs.partition_point(|&v| v < x) as f64 / n;
        let upto = xs.partition_point(|&v| v <= x) as f64 / n;
        worst = worst.max((below - mu.cdf_left(x)).abs()).max((upto - mu.cdf(x)).abs());
    };
    let mut prev = f64::NAN;
    for &x in &xs {
        if x != prev {
            check(x);
            prev = x;
        }
    }
    for a in mu.atoms() {
        check(a.x);
    }
    worst
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// Mean absolute difference of the empirical and target quantile functions
/// over the levels `(j - 0.5) / 10⁴`.
pub fn wasserstein1(samples: &[f64], mu: &TargetMeasure) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    mu.mean()?;
    let xs = sorted(samples);
    let n = xs.len();
    let mut total = 0.0;
    for j in 1..=W1_GRID {
        let p = (j as f64 - 0.5) / W1_GRID as f64;
        let k = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        total += (xs[k] - mu.quantile(p)?).abs();
    }
    Ok(total / W1_GRID as f64)
}

/// `|ν(x0) 2λ / (W f(x0)) - 1|`; at an atom of the target the atom masses
/// replace the densities.
pub fn corollary_check(model: &DiffusionModel) -> Result<f64> {
    let x0 = model.x0();
    let target = model.target();
    let factor = 2.0 * model.lambda() / model.wronskian();
    let atom = target.atom_mass(x0);
    if atom > 0.0 {
        return Ok((model.speed_atom_mass(x0) * factor / atom - 1.0).abs());
    }
    let f = target.density(x0);
    if !(f > 0.0) {
        return Err(Error::NotDensityPoint(x0));
    }
    Ok((model.speed_density(x0) * factor / f - 1.0).abs())
}

/// Equally spaced evaluation points over the support, with infinite ends
/// replaced by the `1e-6` quantiles.
pub fn residual_grid(model: &DiffusionModel) -> Result<Vec<f64>> {
    let (a, b) = model.truncated_range(1e-6)?;
    Ok((0..RESIDUAL_POINTS).map(|i| a + (b - a) * i as f64 / (RESIDUAL_POINTS - 1) as f64).collect())
}

/// Largest relative residual `|½ f'' - λ ν f| / max(1, λ ν |f|)` of both
/// closed-form eigenfunctions on their native domains.
///
/// `f''` is a five-point central difference with step `10⁻³` times the
/// target's interquartile range. Points whose stencil would come within
/// `3h` of an atom, a density breakpoint, the start or a domain end are
/// skipped.
pub fn eigen_residual(model: &DiffusionModel, grid: &[f64]) -> f64 {
    let target = model.target();
    let h = RESIDUAL_STEP * target.length_scale();
    let pair = model.eigenfunctions();
    let (inc, dec) = pair.native_domains();
    let mut avoid = target.breakpoints();
    avoid.push(model.x0());
    let lambda = model.lambda();
    let mut worst: f64 = 0.0;
    type Branch<'b> = ((f64, f64), &'b dyn Fn(f64) -> f64);
    let domains: [Branch; 2] = [
        (inc, &|x| pair.increasing_formula(x)),
        (dec, &|x| pair.decreasing_formula(x)),
    ];
    for ((lo, hi), f) in domains {
        for &x in grid {
            if !(x - 3.0 * h > lo && x + 3.0 * h < hi) || avoid.iter().any(|&c| (x - c).abs() < 3.0 * h) {
                continue;
            }
            let fx = f(x);
            let d2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * fx + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h);
            let rhs = lambda * model.speed_density(x) * fx;
            let r = (0.5 * d2 - rhs).abs() / rhs.abs().max(1.0);
            if r.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(r);
        }
    }
    worst
}

/// Pass thresholds for every check. `None` selects the 1% Kolmogorov–Smirnov
/// critical value for the sample size at hand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub ks: Option<f64>,
    pub w1: f64,
    pub corollary: f64,
    pub eigen_residual: f64,
    pub truncation_rate: f64,
    pub engine_agreement: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks: None,
            w1: 0.02,
            corollary: 1e-8,
            eigen_residual: 1e-6,
            truncation_rate: 1e-3,
            engine_agreement: None,
        }
    }
}

impl Thresholds {
    pub fn ks_for(&self, n: usize) -> f64 {
        self.ks.unwrap_or(KS_ONE_PERCENT / (n as f64).sqrt())
    }

    pub fn agreement_for(&self, n1: usize, n2: usize) -> f64 {
        self.engine_agreement
            .unwrap_or(KS_ONE_PERCENT * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt())
    }
}

/// What `consistency_report` runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub sim: SimConfig,
    pub engines: Vec<Engine>,
    pub thresholds: Thresholds,
}

impl VerifyConfig {
    pub fn new(sim: SimConfig, engines: Vec<Engine>) -> Self {
        Self { sim, engines, thresholds: Thresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: String,
    pub seed: u64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of every check on one model. The verdict is `pass` iff every
/// entry of `checks` passed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Kolmogorov distance of the first engine's sample to the target.
    pub ks: f64,
    pub w1: Option<f64>,
    pub corollary_err: Option<f64>,
    pub eigen_residual: f64,
    pub martingale_class: String,
    pub boundaries: [String; 2],
    pub verdict: Verdict,
    pub config: VerifyConfig,
    pub provenance: Provenance,
    pub checks: Vec<CheckResult>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check(name: impl Into<String>, value: f64, threshold: f64) -> CheckResult {
    CheckResult { name: name.into(), value, threshold, passed: value <= threshold }
}

/// Simulates with each configured engine and runs every applicable check.
///
/// The first engine uses `cfg.sim.seed`; later engines use seeds derived from
/// it so that the samples compared by `engine_agreement` are independent.
pub fn consistency_report(model: &DiffusionModel, cfg: &VerifyConfig) -> Result<ConsistencyReport> {
    if cfg.engines.is_empty() {
        return Err(Error::InvalidParameters("no engine selected".into()));
    }
    let th = &cfg.thresholds;
    let target = model.target();
    let mut checks = Vec::new();
    let mut samples: Vec<TerminalSample> = Vec::new();
    for (k, &engine) in cfg.engines.iter().enumerate() {
        let seed = cfg.sim.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let sim = SimConfig { engine, seed, ..cfg.sim.clone() };
        samples.push(simulate_terminal(model, &sim)?);
    }
    let mut ks_first = f64::NAN;
    let mut w1_first = None;
    for s in &samples {
        let name = s.engine.as_str();
        let ks = ks_distance(&s.values, target);
        if ks_first.is_nan() {
            ks_first = ks;
        }
        checks.push(check(format!("ks[{name}]"), ks, th.ks_for(s.n())));
        match wasserstein1(&s.values, target) {
            Ok(w) => {
                w1_first.get_or_insert(w);
                checks.push(check(format!("w1[{name}]"), w, th.w1));
            }
            Err(Error::UndefinedMean) => {}
            Err(e) => return Err(e),
        }
        let (lo, hi) = target.support();
        if lo.is_infinite() || hi.is_infinite() {
            checks.push(check(format!("truncation_rate[{name}]"), s.truncation_rate(), th.truncation_rate));
        }
    }
    if let [a, b] = samples.as_slice() {
        checks.push(check(
            "engine_agreement",
            ks_two_sample(&a.values, &b.values),
            th.agreement_for(a.n(), b.n()),
        ));
    }
    let corollary_err = match corollary_check(model) {
        Ok(c) => {
            checks.push(check("corollary", c, th.corollary));
            Some(c)
        }
        Err(Error::NotDensityPoint(_)) => None,
        Err(e) => return Err(e),
    };
    let residual = eigen_residual(model, &residual_grid(model)?);
    checks.push(check("eigen_residual", residual, th.eigen_residual));
    let verdict = if checks.iter().all(|c| c.passed) { Verdict::Pass } else { Verdict::Fail };
    let [lb, rb] = model.boundaries();
    Ok(ConsistencyReport {
        ks: ks_first,
        w1: w1_first,
        corollary_err,
        eigen_residual: residual,
        martingale_class: model.martingale_class().as_str().to_string(),
        boundaries: [lb.as_str().to_string(), rb.as_str().to_string()],
        verdict,
        config: cfg.clone(),
        provenance: Provenance { model_hash: model_hash(model)?, seed: cfg.sim.seed, n: cfg.sim.n_paths },
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::synthesize;

    fn uniform() -> TargetMeasure {
        TargetMeasure::uniform(-1.0, 1.0).unwrap()
    }

    #[test]
    fn ks_of_midpoint_quantiles() {
        let n = 1000;
        let xs: Vec<f64> = (1..=n).map(|i| -1.0 + 2.0 * (i as f64 - 0.5) / n as f64).collect();
        assert!((ks_distance(&xs, &uniform()) - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_all_at_median() {
        assert!((ks_distance(&[0.0; 50], &uniform()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_sees_both_sides_of_an_atom() {
        let mu = TargetMeasure::from_samples(&[0.0, 1.0], None).unwrap();
        assert_eq!(ks_distance(&[0.0, 1.0], &mu), 0.0);
        // All mass at 1 leaves F_n(0) = 0 against F(0) = 1/2.
        assert_eq!(ks_distance(&[1.0, 1.0], &mu), 0.5);
    }

    #[test]
    fn two_sample_ks_basic() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_translation() {
        let n = 10_000;
        let c = 0.3;
        let xs: Vec<f64> = (1..=n).map(|i| -1.0 + c + 2.0 * (i as f64 - 0.5) / n as f64).collect();
        assert!((wasserstein1(&xs, &uniform()).unwrap() - c).abs() < 1e-9);
    }

    #[test]
    fn corollary_examples() {
        let m = synthesize(&uniform(), 0.0, 0.5, 1.0).unwrap();
        assert!(corollary_check(&m).unwrap() < 1e-15);
        let b = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 2.0).unwrap();
        assert!(corollary_check(&b).unwrap() < 1e-15);
        let atomic = TargetMeasure::from_samples(&[-1.0, 0.0, 1.0], None).unwrap();
        assert!(corollary_check(&synthesize(&atomic, 0.0, 1.0, 1.0).unwrap()).unwrap() < 1e-15);
        let gap = TargetMeasure::from_samples(&[-1.0, 1.0], None).unwrap();
        let err = corollary_check(&synthesize(&gap, 0.0, 1.0, 1.0).unwrap()).unwrap_err();
        assert_eq!(err.code(), "not-density-point");
    }

    #[test]
    fn residual_small_on_exact_models_and_detects_perturbation() {
        let m = synthesize(&uniform(), 0.0, 0.5, 4.0).unwrap();
        let grid = residual_grid(&m).unwrap();
        assert!(eigen_residual(&m, &grid) < 1e-8, "{}", eigen_residual(&m, &grid));
        let b = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 2.0).unwrap();
        assert!(eigen_residual(&b, &residual_grid(&b).unwrap()) < 1e-8);
        let bad = m.with_speed_scale(1.01);
        let r = eigen_residual(&bad, &grid);
        assert!((r - 0.01).abs() < 1e-4, "{r}");
    }
}
