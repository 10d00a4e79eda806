//! The extended map `U(u) = ⌊u⌋ + U_{⌊u⌋}(u − ⌊u⌋)` on `[0, ∞)`.
//!
//! Cell `x` is tiled by the level intervals
//! `I_(x,y) = [x + ω^x_{y+1}, x + ω^x_y)`. The local map sends level `y ≥ 1`
//! affinely onto level `y − 1` and level 0 onto the whole of cell `x + 1`,
//! so a uniform start in cell 0 reproduces the law of the walk.
//!
//! Trajectories keep the cell index and the fractional part apart, so the
//! fractional part keeps full relative precision however far the orbit
//! travels. The extended mode carries the fractional part in double-double
//! arithmetic, for maps whose slopes are not powers of two.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, TailSequence};
use crate::error::{Error, Result};
use crate::numeric::DoubleDouble;
use crate::rng;

/// The level interval `I_(x,y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellInterval {
    pub x: usize,
    pub y: usize,
    pub lower: f64,
    pub upper: f64,
}

impl CellInterval {
    /// `I_(x,y)`, if level `y` lies within the known part of site `x`.
    pub fn new(env: &Environment, x: usize, y: usize) -> Result<Self> {
        let site = env.site(x)?;
        match (site.omega(y + 1), site.omega(y)) {
            (Some(lo), Some(hi)) if lo < hi => Ok(CellInterval { x, y, lower: x as f64 + lo, upper: x as f64 + hi }),
            _ => Err(Error::invalid(format!("level {y} of site {x} lies below the stored tail"))),
        }
    }
}

/// Level `y` with `ω_{y+1} ≤ f < ω_y`, or `None` in the deficit region.
fn level_of(site: &TailSequence, less_than: impl Fn(f64) -> bool) -> Option<usize> {
    let w = site.values();
    // Number of stored ω_n (n ≥ 1) above f, i.e. with f < ω_n.
    let above = w[1..].partition_point(|&omega| less_than(omega));
    if above < w.len() - 1 {
        return Some(above);
    }
    // f < ω_N: level N when f ≥ ω_{N+1} = deficit.
    let d = site.deficit();
    if d == 0.0 || !less_than(d) {
        Some(w.len() - 1)
    } else {
        None
    }
}

fn omega_or_deficit(site: &TailSequence, n: usize) -> f64 {
    site.values().get(n).copied().unwrap_or(site.deficit())
}

/// Largest double strictly below `v` (for `v > 0`).
fn just_below(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

/// One local step on the fractional part. Returns whether the orbit moves
/// to the next cell, and the new fractional part.
fn local_step(site: &TailSequence, x: usize, f: f64) -> Result<(bool, f64)> {
    let y = level_of(site, |omega| f < omega).ok_or(Error::DeficitRegion { site: x, value: f })?;
    let lo = omega_or_deficit(site, y + 1);
    let hi = site.values()[y];
    let t = (f - lo) / (hi - lo);
    if y == 0 {
        Ok((true, t.min(just_below(1.0))))
    } else {
        let top = site.values()[y - 1];
        let out = hi + (top - hi) * t;
        Ok((false, out.clamp(hi, just_below(top))))
    }
}

fn local_step_dd(site: &TailSequence, x: usize, f: DoubleDouble) -> Result<(bool, DoubleDouble)> {
    let y = level_of(site, |omega| f.lt_f64(omega)).ok_or(Error::DeficitRegion { site: x, value: f.to_f64() })?;
    let lo = omega_or_deficit(site, y + 1);
    let hi = site.values()[y];
    let t = (f - lo) / DoubleDouble::diff(hi, lo);
    if y == 0 {
        let out = if t.lt_f64(1.0) { t } else { DoubleDouble::from_f64(just_below(1.0)) };
        Ok((true, out))
    } else {
        let top = site.values()[y - 1];
        let out = t * DoubleDouble::diff(top, hi) + hi;
        let out = if out.lt_f64(top) { out } else { DoubleDouble::from_f64(just_below(top)) };
        let out = if out.lt_f64(hi) { DoubleDouble::from_f64(hi) } else { out };
        Ok((false, out))
    }
}

/// `U_x(u)` for `u ∈ [0, 1)`: level `y ≥ 1` maps onto `[ω_{y−1}, ω_y)`
/// shifted down one level, level 0 onto `[1, 2)`.
pub fn local_map(site: &TailSequence, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::invalid(format!("local map needs u in [0,1), got {u}")));
    }
    let (next, f) = local_step(site, 0, u)?;
    Ok(if next { 1.0 + f } else { f })
}

/// `⌊u⌋ + U_{⌊u⌋}(u − ⌊u⌋)`.
pub fn global_step(env: &Environment, u: f64) -> Result<f64> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid(format!("state must be a non-negative real, got {u}")));
    }
    let x = u.floor();
    let cell = x as usize;
    let (next, f) = local_step(env.site(cell)?, cell, u - x)?;
    Ok(x + if next { 1.0 + f } else { f })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    /// Fractional part in double-double arithmetic (about 106 bits).
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Times at which histograms are recorded; empty means every time `0..=horizon`.
    #[serde(default)]
    pub times: Vec<usize>,
}

impl TrajectoryConfig {
    fn record_times(&self) -> Vec<usize> {
        if self.times.is_empty() {
            (0..=self.horizon).collect()
        } else {
            let mut t = self.times.clone();
            t.sort_unstable();
            t.dedup();
            t
        }
    }
}

/// Occupation counts of the simulated orbits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub paths: usize,
    pub times: Vec<usize>,
    /// `cells[i][x]`: orbits in `[x, x+1)` at `times[i]`.
    pub cells: Vec<Vec<u64>>,
    /// `levels[i][(x, y)]`: orbits in `I_(x,y)` at `times[i]`.
    pub levels: Vec<BTreeMap<(usize, usize), u64>>,
    /// Relative positions `(u − lower)/(upper − lower)` inside the level
    /// interval occupied at the horizon, grouped by interval.
    pub subcell: BTreeMap<(usize, usize), Vec<f64>>,
    /// Orbits stopped after entering a deficit region.
    pub flagged: usize,
}

impl TrajectoryResult {
    /// Empirical `P(u_n ∈ [x, x+1))` at the `i`-th recorded time, over all paths.
    pub fn cell_frequencies(&self, i: usize) -> Vec<f64> {
        self.cells[i].iter().map(|&c| c as f64 / self.paths as f64).collect()
    }
}

#[derive(Clone, Copy)]
enum Frac {
    Double(f64),
    Extended(DoubleDouble),
}

impl Frac {
    fn level(self, site: &TailSequence) -> Option<usize> {
        match self {
            Frac::Double(f) => level_of(site, |omega| f < omega),
            Frac::Extended(f) => level_of(site, |omega| f.lt_f64(omega)),
        }
    }
}

/// Iterates `U` from `u_0 ~ Uniform[0, 1)` along independent orbits.
pub fn simulate_trajectories(env: &Environment, cfg: &TrajectoryConfig) -> Result<TrajectoryResult> {
    if cfg.paths == 0 {
        return Err(Error::invalid("at least one path is required"));
    }
    if env.len() <= cfg.horizon {
        return Err(Error::SiteOutOfRange { site: cfg.horizon, available: env.len() });
    }
    let times = cfg.record_times();
    if times.last().is_some_and(|&t| t > cfg.horizon) {
        return Err(Error::invalid("recorded times must not exceed the horizon"));
    }
    let mut result = TrajectoryResult {
        paths: cfg.paths,
        times: times.clone(),
        cells: vec![vec![0; cfg.horizon + 1]; times.len()],
        levels: vec![BTreeMap::new(); times.len()],
        subcell: BTreeMap::new(),
        flagged: 0,
    };

    for p in 0..cfg.paths {
        let mut r = rng::stream(cfg.seed, "dynsys.initial", p as u64);
        let mut frac = match cfg.precision {
            Precision::Double => Frac::Double(r.random()),
            Precision::Extended => {
                let hi: f64 = r.random();
                let lo: f64 = r.random::<f64>() * f64::EPSILON * 0.5;
                Frac::Extended(DoubleDouble::new(hi, lo))
            }
        };
        let mut cell = 0usize;
        let mut next_record = 0;
        for t in 0..=cfg.horizon {
            if next_record < times.len() && times[next_record] == t {
                let site = env.site(cell)?;
                let Some(y) = frac.level(site) else {
                    result.flagged += 1;
                    break;
                };
                result.cells[next_record][cell] += 1;
                *result.levels[next_record].entry((cell, y)).or_insert(0) += 1;
                next_record += 1;
            }
            if t == cfg.horizon {
                let site = env.site(cell)?;
                if let Some(y) = frac.level(site) {
                    let lo = omega_or_deficit(site, y + 1);
                    let hi = site.values()[y];
                    let rel = match frac {
                        Frac::Double(f) => (f - lo) / (hi - lo),
                        Frac::Extended(f) => ((f - lo) / DoubleDouble::diff(hi, lo)).to_f64(),
                    };
                    result.subcell.entry((cell, y)).or_default().push(rel);
                }
                break;
            }
            let site = env.site(cell)?;
            let stepped = match frac {
                Frac::Double(f) => local_step(site, cell, f).map(|(a, f)| (a, Frac::Double(f))),
                Frac::Extended(f) => local_step_dd(site, cell, f).map(|(a, f)| (a, Frac::Extended(f))),
            };
            match stepped {
                Ok((advance, f)) => {
                    cell += usize::from(advance);
                    frac = f;
                }
                Err(Error::DeficitRegion { .. }) => {
                    result.flagged += 1;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(result)
}
