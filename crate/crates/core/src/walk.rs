//! The chain `Z_n = (X_n, Y_n)`: sojourn laws, exact hitting-time and
//! position laws by convolution, and Monte Carlo path sampling.
//!
//! `X_n = x` exactly when `T_x ≤ n < T_{x+1}`, where `T_x` is the sum of the
//! independent sojourns `τ_0, …, τ_{x−1}` and `P(τ_x ≥ n) = ω^x_{n−1}`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{convolve_capped, trim_ends, DiscreteDistribution};
use crate::environment::{Environment, TailSequence};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::rng;

/// Law of `τ`: atoms `1..=N+1` with `P(τ = n) = ω_{n−1} − ω_n`, where
/// `ω_{N+1}` is the deficit. The deficit is the mass above `N+1`.
pub fn sojourn_pmf(site: &TailSequence) -> DiscreteDistribution {
    let w = site.values();
    let d = site.deficit();
    let probs = (1..=w.len()).map(|n| w[n - 1] - w.get(n).copied().unwrap_or(d)).collect();
    DiscreteDistribution::from_raw(1, probs, d)
}

/// A sojourn drawn by inversion. `truncated` marks draws from the deficit
/// region, where only `steps > N+1` is known and `N+2` is returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SojournDraw {
    pub steps: usize,
    pub truncated: bool,
}

/// Inverse-CDF sampling with half-open cells: `n` is returned for
/// `1 − ω_{n−1} ≤ u < 1 − ω_n`, i.e. `ω_n < 1 − u ≤ ω_{n−1}`.
pub fn sample_sojourn(site: &TailSequence, u: f64) -> SojournDraw {
    let v = 1.0 - u;
    let w = site.values();
    // First n ≥ 1 with ω_n < v among the stored values.
    let n = 1 + w[1..].partition_point(|&omega| omega >= v);
    if n < w.len() {
        return SojournDraw { steps: n, truncated: false };
    }
    if site.deficit() < v {
        SojournDraw { steps: w.len(), truncated: false }
    } else {
        SojournDraw { steps: w.len() + 1, truncated: true }
    }
}

/// Knobs of the exact engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Mass trimmed from each end of a distribution after every convolution.
    pub trunc_tol: f64,
    /// Largest accumulated deficit accepted before failing.
    pub deficit_budget: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { trunc_tol: 1e-14, deficit_budget: 1e-6 }
    }
}

impl ExactOptions {
    fn validate(&self) -> Result<()> {
        if !(self.trunc_tol >= 0.0 && self.deficit_budget > 0.0) {
            return Err(Error::invalid(format!("invalid exact-engine options {self:?}")));
        }
        Ok(())
    }
}

/// Incremental `T_x → T_{x+1} = T_x ⊛ τ_x`, optionally discarding times
/// above a horizon (they cannot influence positions up to that horizon).
pub struct HittingTimes<'a> {
    env: &'a Environment,
    opts: ExactOptions,
    cap: Option<usize>,
    x: usize,
    offset: usize,
    probs: Vec<f64>,
    /// Upper bound on mass missing from `probs` below the cap.
    lost: f64,
    sojourns: HashMap<usize, DiscreteDistribution>,
}

impl<'a> HittingTimes<'a> {
    pub fn new(env: &'a Environment, opts: ExactOptions, cap: Option<usize>) -> Result<Self> {
        opts.validate()?;
        Ok(HittingTimes { env, opts, cap, x: 0, offset: 0, probs: vec![1.0], lost: 0.0, sojourns: HashMap::new() })
    }

    /// The site whose hitting time is currently held.
    pub fn site(&self) -> usize {
        self.x
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// `P(T_x = offset + i)` for the stored atoms.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lost(&self) -> f64 {
        self.lost
    }

    /// `P(T_x = k)`, zero outside the stored atoms.
    pub fn pmf(&self, k: usize) -> f64 {
        k.checked_sub(self.offset).and_then(|i| self.probs.get(i)).copied().unwrap_or(0.0)
    }

    /// Advances to `T_{x+1}`.
    pub fn advance(&mut self) -> Result<()> {
        let x = self.x;
        self.env.site(x)?;
        // Shared sites reuse one pmf; the pointer is stable while `env` is borrowed.
        let shared = self.env.shared_site(x);
        let pmf = self.sojourns.entry(std::sync::Arc::as_ptr(shared) as usize).or_insert_with(|| sojourn_pmf(shared));
        let (s_offset, s_probs, s_deficit) = (pmf.offset(), pmf.probs(), pmf.deficit());
        let (offset, probs, _beyond) = convolve_capped(self.offset, &self.probs, s_offset, s_probs, self.cap);
        let (start, end, trimmed) = trim_ends(&probs, self.opts.trunc_tol);
        let mass: f64 = self.probs.iter().sum();
        self.lost += trimmed + mass * s_deficit;
        self.offset = offset + start;
        self.probs = probs[start..end].to_vec();
        self.x += 1;
        if self.lost > self.opts.deficit_budget {
            return Err(Error::DeficitBudget { deficit: self.lost, budget: self.opts.deficit_budget });
        }
        Ok(())
    }

    /// The current law as a distribution (meaningful when uncapped).
    pub fn distribution(&self) -> DiscreteDistribution {
        DiscreteDistribution::from_raw(self.offset, self.probs.clone(), self.lost)
    }
}

/// Law of `T_x`: the convolution of the sojourn laws of sites `0..x`.
pub fn hitting_time_distribution(env: &Environment, x: usize, opts: ExactOptions) -> Result<DiscreteDistribution> {
    if x > env.len() {
        return Err(Error::SiteOutOfRange { site: x - 1, available: env.len() });
    }
    let mut h = HittingTimes::new(env, opts, None)?;
    for _ in 0..x {
        h.advance()?;
    }
    Ok(h.distribution())
}

/// Exact law of `X_n` with a per-atom error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionLaw {
    pub n: usize,
    /// Lower values of `P(X_n = x)`, with deficit `1 − Σ`.
    pub dist: DiscreteDistribution,
    /// `P(X_n = x) ∈ [dist.pmf(x), dist.pmf(x) + atom_bound[x]]`.
    pub atom_bound: Vec<f64>,
}

impl PositionLaw {
    pub fn bound(&self, x: usize) -> f64 {
        self.atom_bound.get(x).copied().unwrap_or(self.dist.deficit())
    }

    /// `P(X_n = x)` for `x = 0..len`, zero-padded.
    pub fn dense(&self, len: usize) -> Vec<f64> {
        (0..len).map(|x| self.dist.pmf(x)).collect()
    }
}

/// `P(X_n = x) = Σ_{k ≤ n} P(T_x = k) ω^x_{n−k}` with `T_0 = 0`.
fn position_term(h: &HittingTimes, site: &TailSequence, n: usize) -> (f64, f64) {
    let hi = n.min(h.offset() + h.probs().len().saturating_sub(1));
    if h.probs().is_empty() || h.offset() > n {
        return (0.0, h.lost());
    }
    let mut unknown_mass = 0.0;
    let value = compensated_sum((h.offset()..=hi).map(|k| {
        let p = h.pmf(k);
        match site.omega(n - k) {
            Some(w) => p * w,
            None => {
                unknown_mass += p;
                0.0
            }
        }
    }));
    (value, h.lost() + unknown_mass * site.deficit())
}

/// Exact laws of `X_n` for every `n` in `ns`, sharing one pass over the
/// hitting times.
pub fn position_distributions(env: &Environment, ns: &[usize], opts: ExactOptions) -> Result<Vec<PositionLaw>> {
    let Some(&n_max) = ns.iter().max() else {
        return Ok(Vec::new());
    };
    let mut h = HittingTimes::new(env, opts, Some(n_max))?;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ns.len()];
    let mut bounds: Vec<Vec<f64>> = vec![Vec::new(); ns.len()];
    let mut active: Vec<bool> = vec![true; ns.len()];
    loop {
        let x = h.site();
        for (i, &n) in ns.iter().enumerate() {
            if !active[i] {
                continue;
            }
            // P(X_n ≥ x) ≤ P(T_x ≤ n); stop once that is negligible.
            let reach: f64 = compensated_sum(h.probs().iter().take((n + 1).saturating_sub(h.offset())).copied());
            if x > n || reach <= opts.trunc_tol {
                active[i] = false;
                continue;
            }
            let (v, b) = position_term(&h, env.site(x)?, n);
            values[i].push(v);
            bounds[i].push(b);
        }
        if !active.iter().any(|a| *a) {
            break;
        }
        if x >= env.len() {
            return Err(Error::SiteOutOfRange { site: x, available: env.len() });
        }
        h.advance()?;
    }
    ns.iter()
        .zip(values.into_iter().zip(bounds))
        .map(|(&n, (v, b))| {
            let missing = (1.0 - compensated_sum(v.iter().copied())).max(0.0);
            Ok(PositionLaw { n, dist: DiscreteDistribution::from_raw(0, v, missing), atom_bound: b })
        })
        .collect()
}

pub fn position_distribution(env: &Environment, n: usize, opts: ExactOptions) -> Result<PositionLaw> {
    Ok(position_distributions(env, &[n], opts)?.remove(0))
}

/// Exact `P(Z_n = (x, y))`, indexed `[x][y]`: arrival at `x` at time
/// `k ≤ n` followed by a sojourn of exactly `y + 1 + n − k` steps.
pub fn level_distribution(env: &Environment, n: usize, opts: ExactOptions) -> Result<Vec<Vec<f64>>> {
    if env.len() <= n {
        return Err(Error::SiteOutOfRange { site: n, available: env.len() });
    }
    let mut h = HittingTimes::new(env, opts, Some(n))?;
    let mut out = Vec::new();
    for x in 0..=n {
        let pmf = sojourn_pmf(env.site(x)?);
        let levels = pmf.max_support();
        let row: Vec<f64> =
            (0..levels).map(|y| compensated_sum((h.offset()..=n).map(|k| h.pmf(k) * pmf.pmf(y + 1 + n - k)))).collect();
        out.push(row);
        if x < n {
            h.advance()?;
        }
    }
    Ok(out)
}

/// Position of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainState {
    pub x: usize,
    pub y: usize,
}

/// What each simulated path reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Record {
    Endpoint,
    FullPath,
    /// `T_x` for each listed site, or `None` if not reached by the horizon.
    HittingTimes {
        sites: Vec<usize>,
    },
    /// `X_n` at each listed time.
    Checkpoints {
        times: Vec<usize>,
    },
}

/// Two samplers of the same law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Steps the chain one transition at a time, drawing each new level by
    /// a linear scan of the kernel.
    FullChain,
    /// Adds independent sojourns drawn by inversion with binary search.
    SojournSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
    pub record: Record,
    pub sampler: Sampler,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub endpoints: Vec<ChainState>,
    pub paths: Vec<Vec<ChainState>>,
    pub hitting_times: Vec<Vec<Option<usize>>>,
    pub checkpoints: Vec<Vec<usize>>,
    /// Paths that drew at least one sojourn from a deficit region.
    pub truncated_paths: usize,
}

impl McResult {
    /// Empirical law of `X_horizon` on `0..len`.
    pub fn position_frequencies(&self, len: usize) -> Vec<f64> {
        let mut counts = vec![0.0; len];
        for s in &self.endpoints {
            if s.x < len {
                counts[s.x] += 1.0;
            }
        }
        let total = self.endpoints.len() as f64;
        counts.iter_mut().for_each(|c| *c /= total);
        counts
    }
}

/// Level drawn by scanning the kernel upwards: `Y = y` when
/// `ω_{y+1} < 1 − u ≤ ω_y`.
fn scan_level(site: &TailSequence, u: f64, truncated: &mut bool) -> usize {
    let v = 1.0 - u;
    let mut y = 0;
    loop {
        match site.omega(y + 1) {
            Some(next) if next >= v => y += 1,
            Some(_) => return y,
            None => {
                *truncated = true;
                return y;
            }
        }
    }
}

struct PathOutcome {
    end: ChainState,
    path: Vec<ChainState>,
    hits: Vec<Option<usize>>,
    checks: Vec<usize>,
    truncated: bool,
}

fn run_full_chain(env: &Environment, cfg: &McConfig, index: u64) -> Result<PathOutcome> {
    let mut r = rng::stream(cfg.seed, "walk.full_chain", index);
    let mut truncated = false;
    let mut state = ChainState { x: 0, y: scan_level(env.site(0)?, r.random(), &mut truncated) };
    let mut out = PathOutcome { end: state, path: Vec::new(), hits: Vec::new(), checks: Vec::new(), truncated };
    let record_path = matches!(cfg.record, Record::FullPath);
    if record_path {
        out.path.push(state);
    }
    let mut arrivals = vec![0usize];
    for t in 1..=cfg.horizon {
        if state.y > 0 {
            state.y -= 1;
        } else {
            let x = state.x + 1;
            state = ChainState { x, y: scan_level(env.site(x)?, r.random(), &mut out.truncated) };
            arrivals.push(t);
        }
        if record_path {
            out.path.push(state);
        }
        if let Record::Checkpoints { times } = &cfg.record {
            if times.contains(&t) {
                out.checks.push(state.x);
            }
        }
    }
    out.end = state;
    finish_records(cfg, &arrivals, &mut out);
    Ok(out)
}

fn run_sojourn_sum(env: &Environment, cfg: &McConfig, index: u64) -> Result<PathOutcome> {
    let mut r = rng::stream(cfg.seed, "walk.sojourn_sum", index);
    let mut out = PathOutcome {
        end: ChainState { x: 0, y: 0 },
        path: Vec::new(),
        hits: Vec::new(),
        checks: Vec::new(),
        truncated: false,
    };
    let mut arrivals = vec![0usize];
    let (mut x, mut t) = (0usize, 0usize);
    loop {
        let draw = sample_sojourn(env.site(x)?, r.random());
        out.truncated |= draw.truncated;
        if t + draw.steps > cfg.horizon {
            out.end = ChainState { x, y: t + draw.steps - 1 - cfg.horizon };
            if let Record::FullPath = cfg.record {
                // Replay the sojourn levels on the recorded grid.
                for s in out.path.len()..=cfg.horizon {
                    out.path.push(ChainState { x, y: t + draw.steps - 1 - s });
                }
            }
            break;
        }
        if let Record::FullPath = cfg.record {
            for s in t..t + draw.steps {
                out.path.push(ChainState { x, y: t + draw.steps - 1 - s });
            }
        }
        t += draw.steps;
        x += 1;
        arrivals.push(t);
    }
    if let Record::Checkpoints { times } = &cfg.record {
        for &c in times.iter().filter(|&&c| (1..=cfg.horizon).contains(&c)) {
            out.checks.push(arrivals.partition_point(|&a| a <= c) - 1);
        }
    }
    finish_records(cfg, &arrivals, &mut out);
    Ok(out)
}

fn finish_records(cfg: &McConfig, arrivals: &[usize], out: &mut PathOutcome) {
    if let Record::HittingTimes { sites } = &cfg.record {
        out.hits = sites.iter().map(|&s| arrivals.get(s).copied()).collect();
    }
}

/// Simulates `cfg.paths` independent paths to `cfg.horizon`. Each path has
/// its own random stream, keyed by path index.
pub fn simulate_paths(env: &Environment, cfg: &McConfig) -> Result<McResult> {
    if cfg.paths == 0 {
        return Err(Error::invalid("at least one path is required"));
    }
    let needed = match &cfg.record {
        Record::HittingTimes { sites } => sites.iter().max().map_or(0, |m| m + 1).max(cfg.horizon + 1),
        _ => cfg.horizon + 1,
    };
    if env.len() < needed {
        return Err(Error::SiteOutOfRange { site: needed - 1, available: env.len() });
    }
    if let Record::Checkpoints { times } = &cfg.record {
        if times.iter().any(|&t| t == 0 || t > cfg.horizon) {
            return Err(Error::invalid("checkpoints must lie in 1..=horizon"));
        }
    }
    let mut result = McResult::default();
    for i in 0..cfg.paths {
        let o = match cfg.sampler {
            Sampler::FullChain => run_full_chain(env, cfg, i as u64)?,
            Sampler::SojournSum => run_sojourn_sum(env, cfg, i as u64)?,
        };
        result.endpoints.push(o.end);
        result.truncated_paths += usize::from(o.truncated);
        match cfg.record {
            Record::FullPath => result.paths.push(o.path),
            Record::HittingTimes { .. } => result.hitting_times.push(o.hits),
            Record::Checkpoints { .. } => result.checkpoints.push(o.checks),
            Record::Endpoint => {}
        }
    }
    Ok(result)
}
