//! Environments: one strictly decreasing tail sequence `ω^x_0 = 1 > ω^x_1 > …`
//! per site `x ≥ 0`.
//!
//! Sequences are stored up to a truncation index `N` together with a
//! deficit, which is the value `ω_{N+1}` of the first omitted term. Every
//! later term lies in `[0, deficit]`. Moments are reported as point values
//! with enclosing intervals built from family-specific tail sums.

mod diagnostics;
mod file;
pub mod lsv;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_env::RandomEnvModel;

pub use diagnostics::{diagnostics, window_fluctuation, Beta, EnvDiagnostics, SiteDiagnostics, SiteMoments};
pub use lsv::{lsv_cn_sequence, LsvParams};

/// Provenance of one site's tail sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SiteGenerator {
    /// Values supplied directly; nothing is known beyond the deficit.
    Explicit,
    /// `ω_n = r^n`.
    Geometric { ratio: f64 },
    /// `ω_n = (n+1)^{-β}`.
    PowerLaw { beta: f64 },
    /// `ω_n = c_n(α, c, κ)`.
    Lsv { alpha: f64, c: f64, kappa: f64 },
}

/// Where truncation stops: the first `N` with `ω_N ≤ tail_tol`, or `N = n_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_cap: usize,
    pub tail_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { n_cap: 100_000, tail_tol: 1e-12 }
    }
}

impl Truncation {
    pub fn new(n_cap: usize, tail_tol: f64) -> Result<Self> {
        if n_cap == 0 || !(tail_tol > 0.0) {
            return Err(Error::invalid(format!(
                "truncation needs n_cap ≥ 1 and tail_tol > 0 (got {n_cap}, {tail_tol:e})"
            )));
        }
        Ok(Truncation { n_cap, tail_tol })
    }
}

/// Sums over the unstored terms `n ≥ N+2`: a point estimate and an upper
/// bound for `Σ ω_n` and for `Σ (2n+1) ω_n`. Lower bounds are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSums {
    pub first_est: f64,
    pub first_hi: f64,
    pub second_est: f64,
    pub second_hi: f64,
}

impl TailSums {
    const ZERO: TailSums = TailSums { first_est: 0.0, first_hi: 0.0, second_est: 0.0, second_hi: 0.0 };
}

/// One site's tail sequence `ω_0..ω_N` plus the deficit `ω_{N+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSequence {
    values: Vec<f64>,
    deficit: f64,
    generator: SiteGenerator,
    capped: bool,
}

impl TailSequence {
    pub fn new(values: Vec<f64>, deficit: f64, generator: SiteGenerator) -> Result<Self> {
        Self::with_cap_flag(values, deficit, generator, false)
    }

    pub(crate) fn with_cap_flag(
        values: Vec<f64>,
        deficit: f64,
        generator: SiteGenerator,
        capped: bool,
    ) -> Result<Self> {
        match values.first() {
            Some(1.0) => {}
            _ => return Err(Error::InvalidTailSequence("ω_0 must equal 1".into())),
        }
        if let Some(n) = values.windows(2).position(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(Error::InvalidTailSequence(format!(
                "values must be positive and strictly decreasing (fails at n = {})",
                n + 1
            )));
        }
        let last = *values.last().unwrap();
        if !(deficit >= 0.0 && deficit < last) {
            return Err(Error::InvalidTailSequence(format!("deficit {deficit:e} must lie in [0, ω_N = {last:e})")));
        }
        Ok(TailSequence { values, deficit, generator, capped })
    }

    /// Stored values `ω_0..ω_N`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Truncation index `N`.
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn generator(&self) -> SiteGenerator {
        self.generator
    }

    /// True when truncation stopped at `N_cap` rather than at the tail tolerance.
    pub fn capped(&self) -> bool {
        self.capped
    }

    /// `ω_n` for `n ≤ N+1`; `None` when only the bracket `[0, deficit]` is known.
    pub fn omega(&self, n: usize) -> Option<f64> {
        match n.cmp(&self.values.len()) {
            std::cmp::Ordering::Less => Some(self.values[n]),
            std::cmp::Ordering::Equal => Some(self.deficit),
            std::cmp::Ordering::Greater if self.deficit == 0.0 => Some(0.0),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// Lower and upper value of `ω_n`.
    pub fn omega_bounds(&self, n: usize) -> (f64, f64) {
        self.omega(n).map_or((0.0, self.deficit), |v| (v, v))
    }

    /// Tail sums over `n ≥ N+2` implied by the generating family.
    pub fn tail_sums(&self) -> TailSums {
        let d = self.deficit;
        if d == 0.0 {
            return TailSums::ZERO;
        }
        let k = (self.values.len() + 1) as f64; // first index with unknown value
        match self.generator {
            SiteGenerator::Explicit => {
                TailSums { first_est: 0.0, first_hi: f64::INFINITY, second_est: 0.0, second_hi: f64::INFINITY }
            }
            SiteGenerator::Geometric { ratio: r } => {
                let first = d * r / (1.0 - r);
                let second = d * r * ((2.0 * k + 1.0) / (1.0 - r) + 2.0 * r / ((1.0 - r) * (1.0 - r)));
                TailSums { first_est: first, first_hi: first, second_est: second, second_hi: second }
            }
            SiteGenerator::PowerLaw { beta } => {
                // ω_n = (n+1)^{-β}: the sums run over j = n+1 ≥ k+1 of j^{-β}
                // and (2j−1) j^{-β}; convexity bounds each term by the
                // integral over [j−½, j+½].
                let a = k + 1.0;
                let first_hi = (a - 0.5).powf(1.0 - beta) / (beta - 1.0);
                let first_est = euler_maclaurin_zeta_tail(beta, a).min(first_hi);
                let (second_est, second_hi) = if beta > 2.0 {
                    let hi = 2.0 * (a - 0.5).powf(2.0 - beta) / (beta - 2.0);
                    let est = 2.0 * euler_maclaurin_zeta_tail(beta - 1.0, a) - first_est;
                    (est.min(hi), hi)
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                TailSums { first_est, first_hi, second_est, second_hi }
            }
            SiteGenerator::Lsv { alpha, c, kappa } => {
                // Upper bounds from c_n ≤ B n^{-1/α}; estimates extrapolate the
                // last known value with the same exponent.
                let p = 1.0 / alpha;
                let bound = LsvParams { alpha, c, kappa }.cn_bound();
                let scale = d * (k - 1.0).powf(p);
                let (first_est, first_hi) = if p > 1.0 {
                    let hi = bound * (k - 0.5).powf(1.0 - p) / (p - 1.0);
                    (scale * euler_maclaurin_zeta_tail(p, k), hi)
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                let (second_est, second_hi) = if p > 2.0 {
                    let hi = bound * (2.0 * (k - 0.5).powf(2.0 - p) / (p - 2.0) + (k - 0.5).powf(1.0 - p) / (p - 1.0));
                    let est = scale * (2.0 * euler_maclaurin_zeta_tail(p - 1.0, k) + euler_maclaurin_zeta_tail(p, k));
                    (est, hi)
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                TailSums {
                    first_est: first_est.min(first_hi),
                    first_hi,
                    second_est: second_est.min(second_hi),
                    second_hi,
                }
            }
        }
    }
}

/// `Σ_{j ≥ a} j^{-s}` by Euler–Maclaurin with three correction terms.
fn euler_maclaurin_zeta_tail(s: f64, a: f64) -> f64 {
    a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s) + s * a.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0
}

/// Generates `ω_1, ω_2, …` until truncation, then one more value for the deficit.
fn build_tail<F>(generator: SiteGenerator, trunc: Truncation, mut next: F) -> Result<TailSequence>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut values = vec![1.0];
    loop {
        let n = values.len();
        let v = next(n)?;
        let last = values[n - 1];
        if last <= trunc.tail_tol || n - 1 == trunc.n_cap {
            let capped = last > trunc.tail_tol;
            return TailSequence::with_cap_flag(values, v, generator, capped);
        }
        values.push(v);
    }
}

/// Geometric site `ω_n = r^n`.
pub fn geometric_site(ratio: f64, trunc: Truncation) -> Result<TailSequence> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("geometric ratio must lie in (0,1), got {ratio}")));
    }
    let mut v = 1.0;
    build_tail(SiteGenerator::Geometric { ratio }, trunc, |_| {
        v *= ratio;
        Ok(v)
    })
}

/// Power-law site `ω_n = (n+1)^{-β}`.
pub fn power_law_site(beta: f64, trunc: Truncation) -> Result<TailSequence> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("power-law exponent must exceed 1, got {beta}")));
    }
    build_tail(SiteGenerator::PowerLaw { beta }, trunc, |n| Ok(((n + 1) as f64).powf(-beta)))
}

/// LSV site `ω_n = c_n(α, c, κ)`.
pub fn lsv_site(params: LsvParams, trunc: Truncation) -> Result<TailSequence> {
    let mut orbit = lsv::CnSequence::new(params, lsv::DEFAULT_ROOT_TOL)?;
    let generator = SiteGenerator::Lsv { alpha: params.alpha, c: params.c, kappa: params.kappa };
    build_tail(generator, trunc, |_| orbit.next().expect("orbit iterator is infinite"))
}

/// How the sites of an environment were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvModel {
    Geometric {
        ratio: f64,
    },
    PowerLaw {
        beta: f64,
    },
    Lsv {
        alpha: f64,
        c: f64,
        kappa: f64,
    },
    /// Every site has `ω_1 = 0`, so each sojourn lasts exactly one step.
    Degenerate,
    /// Sites with individually specified parameters; see each site's generator.
    PerSite,
    Random {
        model: RandomEnvModel,
    },
}

/// A materialized prefix `0..len` of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    model: EnvModel,
    truncation: Truncation,
    sites: Vec<Arc<TailSequence>>,
}

impl Environment {
    pub fn from_sites(model: EnvModel, truncation: Truncation, sites: Vec<Arc<TailSequence>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::invalid("an environment needs at least one site"));
        }
        Ok(Environment { model, truncation, sites })
    }

    /// `sites` copies of `ω_n = r^n`.
    pub fn geometric(ratio: f64, sites: usize, truncation: Truncation) -> Result<Self> {
        let site = Arc::new(geometric_site(ratio, truncation)?);
        Self::from_sites(EnvModel::Geometric { ratio }, truncation, vec![site; sites])
    }

    /// `sites` copies of `ω_n = (n+1)^{-β}`.
    pub fn power_law(beta: f64, sites: usize, truncation: Truncation) -> Result<Self> {
        let site = Arc::new(power_law_site(beta, truncation)?);
        Self::from_sites(EnvModel::PowerLaw { beta }, truncation, vec![site; sites])
    }

    /// Site `x` gets `ω^x_n = (n+1)^{-β_x}`.
    pub fn power_law_per_site(betas: &[f64], truncation: Truncation) -> Result<Self> {
        let mut cache: HashMap<u64, Arc<TailSequence>> = HashMap::new();
        let sites = betas
            .iter()
            .map(|&b| match cache.get(&b.to_bits()) {
                Some(s) => Ok(Arc::clone(s)),
                None => {
                    let s = Arc::new(power_law_site(b, truncation)?);
                    cache.insert(b.to_bits(), Arc::clone(&s));
                    Ok(s)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let model = match betas {
            [first, rest @ ..] if rest.iter().all(|b| b == first) => EnvModel::PowerLaw { beta: *first },
            _ => EnvModel::PerSite,
        };
        Self::from_sites(model, truncation, sites)
    }

    /// Site `x` gets the backward orbit of `site_params[x]`.
    pub fn from_lsv(site_params: &[LsvParams], truncation: Truncation) -> Result<Self> {
        let mut built: Vec<(LsvParams, Arc<TailSequence>)> = Vec::new();
        let mut sites = Vec::with_capacity(site_params.len());
        for (x, p) in site_params.iter().enumerate() {
            if let Some((_, s)) = built.iter().find(|(q, _)| q == p) {
                sites.push(Arc::clone(s));
                continue;
            }
            let s = Arc::new(lsv_site(*p, truncation).map_err(|e| match e {
                Error::RootFinding { index, detail, .. } => Error::RootFinding { site: Some(x), index, detail },
                other => other,
            })?);
            built.push((*p, Arc::clone(&s)));
            sites.push(s);
        }
        let model = match site_params {
            [first, rest @ ..] if rest.iter().all(|p| p == first) => {
                EnvModel::Lsv { alpha: first.alpha, c: first.c, kappa: first.kappa }
            }
            _ => EnvModel::PerSite,
        };
        Self::from_sites(model, truncation, sites)
    }

    /// Every sojourn lasts one step, so `X_n = n`.
    pub fn degenerate(sites: usize) -> Result<Self> {
        let site = Arc::new(TailSequence::new(vec![1.0], 0.0, SiteGenerator::Explicit)?);
        Self::from_sites(EnvModel::Degenerate, Truncation::default(), vec![site; sites])
    }

    /// Rebuilds the environment from a family or random model with a different
    /// number of sites. Per-site environments cannot be extended.
    pub fn build(model: &EnvModel, truncation: Truncation, sites: usize) -> Result<Self> {
        match model {
            EnvModel::Geometric { ratio } => Self::geometric(*ratio, sites, truncation),
            EnvModel::PowerLaw { beta } => Self::power_law(*beta, sites, truncation),
            EnvModel::Lsv { alpha, c, kappa } => {
                let p = LsvParams { alpha: *alpha, c: *c, kappa: *kappa };
                p.validate()?;
                Self::from_lsv(&vec![p; sites], truncation)
            }
            EnvModel::Degenerate => Self::degenerate(sites),
            EnvModel::Random { model } => {
                Ok(crate::random_env::sample_environment(model, sites, truncation)?.environment)
            }
            EnvModel::PerSite => Err(Error::invalid("a per-site environment has no generator to extend it")),
        }
    }

    /// Copy of this environment with site `x` replaced.
    pub fn with_site(&self, x: usize, site: TailSequence) -> Result<Self> {
        let mut sites = self.sites.clone();
        let slot = sites.get_mut(x).ok_or(Error::SiteOutOfRange { site: x, available: self.sites.len() })?;
        *slot = Arc::new(site);
        Self::from_sites(EnvModel::PerSite, self.truncation, sites)
    }

    pub fn model(&self) -> &EnvModel {
        &self.model
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Number of materialized sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, x: usize) -> Result<&TailSequence> {
        self.sites.get(x).map(|s| s.as_ref()).ok_or(Error::SiteOutOfRange { site: x, available: self.sites.len() })
    }

    pub fn sites(&self) -> impl Iterator<Item = &TailSequence> {
        self.sites.iter().map(|s| s.as_ref())
    }

    pub(crate) fn shared_site(&self, x: usize) -> &Arc<TailSequence> {
        &self.sites[x]
    }
}
