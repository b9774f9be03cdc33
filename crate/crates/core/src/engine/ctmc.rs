//! Birth–death chain on a quantile grid, matched to the generator
//! `(1/2) d/dm d/dx`.
//!
//! Site `i` carries the speed mass `m_i` of its cell (cells are bounded by
//! midpoints) and jumps to its neighbours at rates
//! `1 / (2 m_i (x_{i+1} - x_i))` and `1 / (2 m_i (x_i - x_{i-1}))`. The chain
//! is reversible with respect to `m`. Sites with `m_i = 0` are left
//! instantly, exiting up with the natural-scale probability
//! `(x_i - x_{i-1}) / (x_{i+1} - x_{i-1})`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Exp1, Poisson};

use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use super::{path_rng, SimConfig, MAX_RESTARTS};
use crate::error::{Error, Result};
use crate::quadrature::integrate_split;
use crate::synthesis::{BoundaryClass, DiffusionModel, Side};

/// How the grid treats one end of the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndPolicy {
    /// Finite accessible end: a site sits on the boundary and only jumps
    /// inward.
    Include,
    /// Finite inaccessible end: the outermost site is half a quantile step
    /// inside the boundary and only jumps inward.
    HalfStep,
    /// Truncated infinite end: the outermost site is a guard; reaching it
    /// restarts the path.
    Guard,
}

/// Sites, cell masses and jump rates of the chain.
#[derive(Debug, Clone)]
pub struct CtmcGrid {
    pub sites: Vec<f64>,
    pub masses: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    pub left: EndPolicy,
    pub right: EndPolicy,
    start: usize,
}

fn end_policy(model: &DiffusionModel, side: Side) -> Result<EndPolicy> {
    let (lo, hi) = model.support();
    let end = if side == Side::Left { lo } else { hi };
    if !end.is_finite() {
        return Ok(EndPolicy::Guard);
    }
    match model.boundary(side) {
        BoundaryClass::Reflecting => Ok(EndPolicy::Include),
        BoundaryClass::Inaccessible => Ok(EndPolicy::HalfStep),
        BoundaryClass::AbsorbingUnsupported => {
            Err(Error::UnsupportedBoundary(format!("absorbing end at {end}")))
        }
    }
}

/// Grid with `n_sites` quantile sites plus every atom and the start point.
pub fn build_grid(model: &DiffusionModel, n_sites: usize, cfg: &SimConfig) -> Result<CtmcGrid> {
    build_grid_with(model, n_sites, cfg.truncation_quantile, &[])
}

/// As [`build_grid`], additionally forcing `extra` points to be sites.
pub fn build_grid_with(model: &DiffusionModel, n_sites: usize, q: f64, extra: &[f64]) -> Result<CtmcGrid> {
    if n_sites < 3 {
        return Err(Error::GridDegenerate(format!("{n_sites} sites requested")));
    }
    let left = end_policy(model, Side::Left)?;
    let right = end_policy(model, Side::Right)?;
    let target = model.target();
    let (lo, hi) = target.support();

    let (p_lo, p_hi) = (
        if left == EndPolicy::Guard { q } else { 0.0 },
        if right == EndPolicy::Guard { 1.0 - q } else { 1.0 },
    );
    let s_lo = if left == EndPolicy::HalfStep { 0.5 } else { 0.0 };
    let s_hi = if right == EndPolicy::HalfStep { 0.5 } else { 0.0 };
    let step = (p_hi - p_lo) / ((n_sites - 1) as f64 + s_lo + s_hi);
    let (a, b) = (p_lo + s_lo * step, p_hi - s_hi * step);

    // The start and extra points become knots of the probability grid, so
    // that they sit on sites without crowding a neighbour.
    let mut knots: Vec<(f64, f64)> = std::iter::once(model.x0())
        .chain(extra.iter().copied())
        .filter(|&x| target.density(x) > 0.0 && target.atom_mass(x) == 0.0)
        .map(|x| (target.cdf(x), x))
        .filter(|&(p, _)| p > a && p < b)
        .collect();
    knots.sort_by(|u, v| u.0.total_cmp(&v.0));
    knots.dedup_by(|u, v| u.0 == v.0);

    let endpoint = |p: f64, first: bool| -> Result<f64> {
        if first && left == EndPolicy::Include {
            Ok(lo)
        } else if !first && right == EndPolicy::Include {
            Ok(hi)
        } else {
            target.quantile(p)
        }
    };
    let mut grid = vec![endpoint(a, true)?];
    let mut prev = a;
    let bounds = knots.iter().map(|&(p, x)| (p, Some(x))).chain(std::iter::once((b, None)));
    for (p, x) in bounds {
        let n = ((p - prev) / step).round().max(1.0) as usize;
        for k in 1..n {
            grid.push(target.quantile(prev + (p - prev) * k as f64 / n as f64)?);
        }
        grid.push(match x {
            Some(x) => x,
            None => endpoint(b, false)?,
        });
        prev = p;
    }
    grid.dedup();

    let first = grid[0];
    let last = *grid.last().unwrap();
    let mut required: Vec<f64> = target
        .atoms()
        .iter()
        .map(|a| a.x)
        .filter(|&x| x >= first && x <= last)
        .collect();
    for &x in std::iter::once(&model.x0()).chain(extra) {
        if x < first || x > last {
            return Err(Error::GridDegenerate(format!("{x} lies outside the truncated grid [{first}, {last}]")));
        }
        required.push(x);
    }
    required.sort_by(f64::total_cmp);
    required.dedup();

    // Drop interior quantile sites that crowd a required point.
    let n = grid.len();
    let mut sites: Vec<f64> = Vec::with_capacity(n + required.len());
    for (j, &g) in grid.iter().enumerate() {
        if j > 0 && j + 1 < n {
            let spacing = (g - grid[j - 1]).min(grid[j + 1] - g);
            let k = required.partition_point(|&r| r < g);
            let near = [k.checked_sub(1), Some(k)]
                .into_iter()
                .flatten()
                .filter_map(|k| required.get(k))
                .any(|&r| r != g && (r - g).abs() < 0.3 * spacing);
            if near {
                continue;
            }
        }
        sites.push(g);
    }
    sites.extend_from_slice(&required);
    sites.sort_by(f64::total_cmp);
    sites.dedup();
    CtmcGrid::from_sites(model, sites, left, right)
}

impl CtmcGrid {
    /// Chain on explicit, strictly increasing `sites`; the end policies say
    /// how the outermost sites behave.
    pub fn from_sites(model: &DiffusionModel, sites: Vec<f64>, left: EndPolicy, right: EndPolicy) -> Result<Self> {
        let n = sites.len();
        if n < 3 {
            return Err(Error::GridDegenerate(format!("only {n} distinct sites")));
        }
        if sites.windows(2).any(|w| !(w[1] > w[0])) || sites.iter().any(|x| !x.is_finite()) {
            return Err(Error::GridDegenerate("sites must be finite and strictly increasing".into()));
        }
        let (lo, hi) = model.support();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(match left {
            EndPolicy::Include => sites[0],
            _ => {
                let e = sites[0] - 0.5 * (sites[1] - sites[0]);
                if lo.is_finite() {
                    e.max(0.5 * (lo + sites[0]))
                } else {
                    e
                }
            }
        });
        for w in sites.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(match right {
            EndPolicy::Include => sites[n - 1],
            _ => {
                let e = sites[n - 1] + 0.5 * (sites[n - 1] - sites[n - 2]);
                if hi.is_finite() {
                    e.min(0.5 * (hi + sites[n - 1]))
                } else {
                    e
                }
            }
        });

        let mut breaks = model.target().breakpoints();
        breaks.push(model.x0());
        let nu = |x: f64| model.speed_density(x);
        let mut masses = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (edges[i], edges[i + 1]);
            let inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
            let m = integrate_split(nu, a, b, &inner, 1e-10) + model.speed_atom_mass(sites[i]);
            if !m.is_finite() {
                return Err(Error::GridDegenerate(format!("infinite cell mass at {}", sites[i])));
            }
            masses.push(m);
        }

        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        for i in 0..n {
            let guard = (i == 0 && left == EndPolicy::Guard) || (i == n - 1 && right == EndPolicy::Guard);
            if guard {
                continue;
            }
            let m = masses[i];
            if i + 1 < n {
                up[i] = 1.0 / (2.0 * m * (sites[i + 1] - sites[i]));
            }
            if i > 0 {
                down[i] = 1.0 / (2.0 * m * (sites[i] - sites[i - 1]));
            }
        }
        let start = sites
            .iter()
            .position(|&x| x == model.x0())
            .ok_or_else(|| Error::GridDegenerate("start point is not a site".into()))?;
        Ok(Self { sites, masses, up, down, left, right, start })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.sites.iter().position(|&s| s == x)
    }

    fn is_guard(&self, i: usize) -> bool {
        (i == 0 && self.left == EndPolicy::Guard) || (i + 1 == self.sites.len() && self.right == EndPolicy::Guard)
    }

    fn is_instant(&self, i: usize) -> bool {
        !self.is_guard(i) && self.masses[i] == 0.0
    }

    /// Probability of leaving an instantaneous site upward.
    fn instant_up(&self, i: usize) -> f64 {
        let n = self.sites.len();
        if i == 0 {
            1.0
        } else if i + 1 == n {
            0.0
        } else {
            (self.sites[i] - self.sites[i - 1]) / (self.sites[i + 1] - self.sites[i - 1])
        }
    }

    fn leave_instant<R: Rng>(&self, mut i: usize, rng: &mut R) -> usize {
        while self.is_instant(i) {
            if rng.random::<f64>() < self.instant_up(i) {
                i += 1;
            } else {
                i -= 1;
            }
        }
        i
    }

    /// Uniformized sampler for `X_T`.
    pub fn simulator(&self, lambda: f64, freeze_time: bool) -> CtmcSimulator<'_> {
        let n = self.sites.len();
        let rate = (0..n)
            .filter(|&i| !self.is_guard(i) && !self.is_instant(i))
            .map(|i| self.up[i] + self.down[i])
            .fold(0.0, f64::max);
        let scale = TICK_RANGE as f64 / rate;
        let ticks = (0..n)
            .map(|i| {
                let special = self.is_guard(i) || self.is_instant(i);
                if special || rate == 0.0 {
                    Tick { up: 0, down: 0, special }
                } else {
                    let up = ((self.up[i] * scale).round() as u32).min(TICK_RANGE);
                    let down = ((self.down[i] * scale).round() as u32).min(TICK_RANGE - up);
                    Tick { up, down, special }
                }
            })
            .collect();
        CtmcSimulator { grid: self, rate, ticks, exp: Exp::new(lambda).expect("positive rate"), freeze_time }
    }

    /// One draw of `exp(-λ H)` for the first passage from site `from` to
    /// site `to`, zero past `horizon` or on reaching a guard.
    pub fn hitting<R: Rng>(&self, from: usize, to: usize, lambda: f64, horizon: f64, rng: &mut R) -> f64 {
        let mut i = from;
        let mut t = 0.0;
        while i != to {
            if self.is_guard(i) {
                return 0.0;
            }
            if self.is_instant(i) {
                i = if rng.random::<f64>() < self.instant_up(i) { i + 1 } else { i - 1 };
                continue;
            }
            let r = self.up[i] + self.down[i];
            let e: f64 = Exp1.sample(rng);
            t += e / r;
            if t > horizon {
                return 0.0;
            }
            i = if rng.random::<f64>() * r < self.up[i] { i + 1 } else { i - 1 };
        }
        (-lambda * t).exp()
    }
}

const TICK_BITS: u32 = 21;
const TICK_RANGE: u32 = 1 << TICK_BITS;
/// Paths advanced in lockstep; independent lanes hide load latency.
const LANES: usize = 4;
const CHUNK: usize = 64;

#[derive(Clone, Copy)]
struct Tick {
    up: u32,
    down: u32,
    special: bool,
}

struct Lane {
    rng: Xoshiro256PlusPlus,
    path: usize,
    site: usize,
    ticks: u64,
    restarts: u32,
}

enum Progress {
    Running,
    Done(Result<(f64, u32)>),
}

/// Uniformized sampler at the largest total rate `Λ`: given `T`, the number
/// of ticks is `Poisson(Λ T)`. Each tick uses 21 random bits (three ticks per
/// `u64`): it jumps up below `up`, down in `[up, up + down)`, and stays put
/// otherwise.
pub struct CtmcSimulator<'a> {
    grid: &'a CtmcGrid,
    rate: f64,
    ticks: Vec<Tick>,
    exp: Exp<f64>,
    freeze_time: bool,
}

impl CtmcSimulator<'_> {
    /// Draws `X_T` for paths `0..n_paths`, in path order.
    pub(super) fn run(&self, seed: u64, n_paths: usize) -> Vec<Result<(f64, u32)>> {
        let starts: Vec<usize> = (0..n_paths).step_by(CHUNK).collect();
        let chunks: Vec<Vec<Result<(f64, u32)>>> = starts
            .into_par_iter()
            .map(|a| self.run_chunk(seed, a, (a + CHUNK).min(n_paths)))
            .collect();
        chunks.into_iter().flatten().collect()
    }

    fn run_chunk(&self, seed: u64, first: usize, end: usize) -> Vec<Result<(f64, u32)>> {
        let mut out: Vec<Option<Result<(f64, u32)>>> = (first..end).map(|_| None).collect();
        let mut lanes: Vec<Lane> = Vec::with_capacity(LANES);
        let mut next = first;
        while lanes.len() < LANES && next < end {
            lanes.push(self.launch(seed, next));
            next += 1;
        }
        while !lanes.is_empty() {
            let mut k = 0;
            while k < lanes.len() {
                match self.advance(&mut lanes[k]) {
                    Progress::Running => k += 1,
                    Progress::Done(res) => {
                        out[lanes[k].path - first] = Some(res);
                        if next < end {
                            lanes[k] = self.launch(seed, next);
                            next += 1;
                            k += 1;
                        } else {
                            lanes.swap_remove(k);
                        }
                    }
                }
            }
        }
        out.into_iter().map(|r| r.expect("every path finishes")).collect()
    }

    fn launch(&self, seed: u64, path: usize) -> Lane {
        let mut lane = Lane { rng: path_rng(seed, path as u64), path, site: self.grid.start, ticks: 0, restarts: 0 };
        self.reset(&mut lane);
        lane
    }

    fn reset(&self, lane: &mut Lane) {
        let g = self.grid;
        lane.site = g.start;
        if self.freeze_time {
            lane.ticks = 0;
            return;
        }
        let t: f64 = self.exp.sample(&mut lane.rng);
        let mean = self.rate * t;
        lane.ticks = match Poisson::new(mean) {
            Ok(p) => p.sample(&mut lane.rng) as u64,
            Err(_) => 0,
        };
        lane.site = g.leave_instant(g.start, &mut lane.rng);
    }

    /// Up to three ticks from one random word.
    #[inline(always)]
    fn advance(&self, lane: &mut Lane) -> Progress {
        if lane.ticks == 0 {
            return Progress::Done(Ok((self.grid.sites[lane.site], lane.restarts)));
        }
        let r = lane.rng.next_u64();
        let n = lane.ticks.min(3) as u32;
        let mut i = lane.site;
        for k in 0..n {
            let u = (r >> (TICK_BITS * k)) as u32 & (TICK_RANGE - 1);
            let t = self.ticks[i];
            i = i + (u < t.up) as usize - (u.wrapping_sub(t.up) < t.down) as usize;
            if self.ticks[i].special {
                lane.ticks -= k as u64 + 1;
                return self.special(lane, i);
            }
        }
        lane.ticks -= n as u64;
        lane.site = i;
        Progress::Running
    }

    #[cold]
    fn special(&self, lane: &mut Lane, i: usize) -> Progress {
        let g = self.grid;
        if g.is_guard(i) {
            lane.restarts += 1;
            if lane.restarts > MAX_RESTARTS {
                return Progress::Done(Err(Error::BudgetExceeded(format!(
                    "{MAX_RESTARTS} truncation restarts on one path"
                ))));
            }
            self.reset(lane);
        } else {
            lane.site = g.leave_instant(i, &mut lane.rng);
        }
        Progress::Running
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TargetMeasure;
    use crate::synthesis::synthesize;

    #[test]
    fn uniform_pitch_rates_for_unit_speed() {
        // Laplace rate 1 with λ = 1/2 and W = 2 gives ν ≡ 1.
        let m = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 2.0).unwrap();
        let h = 0.02;
        let sites: Vec<f64> = (0..101).map(|i| -1.0 + h * i as f64).collect();
        let g = CtmcGrid::from_sites(&m, sites, EndPolicy::Guard, EndPolicy::Guard).unwrap();
        for i in 1..100 {
            assert!((g.masses[i] - h).abs() < 1e-12);
            assert!((g.up[i] - 1.0 / (2.0 * h * h)).abs() < 1e-6 * g.up[i]);
            assert!((g.down[i] - 1.0 / (2.0 * h * h)).abs() < 1e-6 * g.down[i]);
        }
    }

    #[test]
    fn detailed_balance_with_cell_masses() {
        let m = synthesize(&TargetMeasure::uniform(-1.0, 1.0).unwrap(), 0.5, 0.5, 1.0).unwrap();
        let g = build_grid(&m, 100, &SimConfig::default()).unwrap();
        for i in 0..g.n_sites() - 1 {
            let lhs = g.masses[i] * g.up[i];
            let rhs = g.masses[i + 1] * g.down[i + 1];
            assert!((lhs - rhs).abs() < 1e-9 * lhs, "{i}");
        }
        assert_eq!(g.left, EndPolicy::Include);
        assert_eq!(g.sites[0], -1.0);
        assert_eq!(g.down[0], 0.0);
    }

    #[test]
    fn grid_contains_atoms_and_start() {
        let mu = TargetMeasure::from_samples(&[-1.0, -0.2, 0.4, 1.0], None).unwrap();
        let m = synthesize(&mu, 0.0, 1.0, 1.0).unwrap();
        let g = build_grid(&m, 60, &SimConfig::default()).unwrap();
        for x in [-1.0, -0.2, 0.0, 0.4, 1.0] {
            assert!(g.index_of(x).is_some(), "{x}");
        }
        let i0 = g.index_of(0.0).unwrap();
        assert_eq!(g.masses[i0], 0.0);
        assert!((g.instant_up(i0) - 0.2 / 0.6).abs() < 1e-15);
    }

    #[test]
    fn inaccessible_end_sites_are_inside() {
        let m = synthesize(&TargetMeasure::uniform(-1.0, 1.0).unwrap(), 0.0, 0.5, 4.0).unwrap();
        let g = build_grid(&m, 400, &SimConfig::default()).unwrap();
        assert_eq!(g.left, EndPolicy::HalfStep);
        assert!(g.sites[0] > -1.0 && *g.sites.last().unwrap() < 1.0);
        assert!(g.masses.iter().all(|m| m.is_finite() && *m > 0.0));
    }

    #[test]
    fn infinite_ends_use_guards() {
        let m = synthesize(&TargetMeasure::laplace(1.0).unwrap(), 0.0, 0.5, 2.0).unwrap();
        let g = build_grid(&m, 200, &SimConfig::default()).unwrap();
        assert_eq!((g.left, g.right), (EndPolicy::Guard, EndPolicy::Guard));
        assert!((g.sites[0] - (2e-6f64).ln()).abs() < 1e-9);
        assert!(g.is_guard(0) && g.is_guard(g.n_sites() - 1));
    }
}
