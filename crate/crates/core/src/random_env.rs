//! Quenched random environments: stationary site-parameter processes with
//! exactly known mixing rates, pushed through the site families of
//! [`crate::environment`].
//!
//! Every site owns a noise vector drawn from its own random stream, so the
//! parameters at site `x` do not depend on how many sites are materialized.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    diagnostics, geometric_site, lsv_site, power_law_site, Beta, EnvModel, Environment, LsvParams, TailSequence,
    Truncation,
};
use crate::error::{Error, Result};
use crate::rng;

const NOISE_STREAM: &str = "random_env.noise";

/// Parameters of one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SiteParams {
    Geometric { ratio: f64 },
    PowerLaw { beta: f64 },
    Lsv { alpha: f64, c: f64 },
}

impl SiteParams {
    fn build(&self, trunc: Truncation) -> Result<TailSequence> {
        match *self {
            SiteParams::Geometric { ratio } => geometric_site(ratio, trunc),
            SiteParams::PowerLaw { beta } => power_law_site(beta, trunc),
            SiteParams::Lsv { alpha, c } => lsv_site(LsvParams::from_alpha_c(alpha, c)?, trunc),
        }
    }

    fn key(&self) -> (u8, u64, u64) {
        match *self {
            SiteParams::Geometric { ratio } => (0, ratio.to_bits(), 0),
            SiteParams::PowerLaw { beta } => (1, beta.to_bits(), 0),
            SiteParams::Lsv { alpha, c } => (2, alpha.to_bits(), c.to_bits()),
        }
    }
}

/// The map from a site's uniform noise to its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParamSampler {
    /// `β` chosen uniformly from a finite list.
    PowerLawChoice {
        betas: Vec<f64>,
    },
    PowerLawRange {
        lo: f64,
        hi: f64,
    },
    GeometricRange {
        lo: f64,
        hi: f64,
    },
    /// Independent uniform `α ∈ [alpha_lo, alpha_hi] ⊂ (0, ½)` and `c ∈ [c_lo, c_hi] ⊂ (0, 1)`.
    LsvRange {
        alpha_lo: f64,
        alpha_hi: f64,
        c_lo: f64,
        c_hi: f64,
    },
}

fn check_range(name: &str, lo: f64, hi: f64, min: f64, max: f64, open_max: bool) -> Result<()> {
    let upper_ok = if open_max { hi < max } else { hi <= max };
    if lo > min && lo <= hi && upper_ok && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} range [{lo}, {hi}] must lie inside ({min}, {max})")))
    }
}

fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    (lo + (hi - lo) * u).clamp(lo, hi)
}

impl ParamSampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            ParamSampler::PowerLawChoice { betas } => {
                if betas.is_empty() || betas.iter().any(|b| !(*b > 1.0 && b.is_finite())) {
                    return Err(Error::invalid("power-law choices must be a non-empty list of β > 1"));
                }
                Ok(())
            }
            ParamSampler::PowerLawRange { lo, hi } => check_range("β", *lo, *hi, 1.0, f64::INFINITY, true),
            ParamSampler::GeometricRange { lo, hi } => check_range("ratio", *lo, *hi, 0.0, 1.0, true),
            ParamSampler::LsvRange { alpha_lo, alpha_hi, c_lo, c_hi } => {
                check_range("α", *alpha_lo, *alpha_hi, 0.0, 0.5, true)?;
                check_range("c", *c_lo, *c_hi, 0.0, 1.0, true)
            }
        }
    }

    /// Number of uniforms consumed per site.
    pub fn channels(&self) -> usize {
        match self {
            ParamSampler::LsvRange { .. } => 2,
            _ => 1,
        }
    }

    fn map(&self, u: &[f64]) -> SiteParams {
        match self {
            ParamSampler::PowerLawChoice { betas } => {
                let i = ((u[0] * betas.len() as f64) as usize).min(betas.len() - 1);
                SiteParams::PowerLaw { beta: betas[i] }
            }
            ParamSampler::PowerLawRange { lo, hi } => SiteParams::PowerLaw { beta: lerp(*lo, *hi, u[0]) },
            ParamSampler::GeometricRange { lo, hi } => SiteParams::Geometric { ratio: lerp(*lo, *hi, u[0]) },
            ParamSampler::LsvRange { alpha_lo, alpha_hi, c_lo, c_hi } => {
                SiteParams::Lsv { alpha: lerp(*alpha_lo, *alpha_hi, u[0]), c: lerp(*c_lo, *c_hi, u[1]) }
            }
        }
    }

    fn contains(&self, p: &SiteParams) -> bool {
        match (self, *p) {
            (ParamSampler::PowerLawChoice { betas }, SiteParams::PowerLaw { beta }) => betas.contains(&beta),
            (ParamSampler::PowerLawRange { lo, hi }, SiteParams::PowerLaw { beta }) => (*lo..=*hi).contains(&beta),
            (ParamSampler::GeometricRange { lo, hi }, SiteParams::Geometric { ratio }) => (*lo..=*hi).contains(&ratio),
            (ParamSampler::LsvRange { alpha_lo, alpha_hi, c_lo, c_hi }, SiteParams::Lsv { alpha, c }) => {
                (*alpha_lo..=*alpha_hi).contains(&alpha) && (*c_lo..=*c_hi).contains(&c)
            }
            _ => false,
        }
    }
}

/// The stationary parameter process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomKind {
    /// Independent sites.
    Iid { sampler: ParamSampler },
    /// Site `x` uses the fractional part of the noise sum over sites
    /// `x..=x+window`: still uniform at every site, and independent at lags
    /// beyond `window`.
    MDependent { sampler: ParamSampler, window: usize },
    /// Stationary finite-state chain; each state carries fixed site parameters.
    Markov { states: Vec<SiteParams>, transition: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEnvModel {
    #[serde(flatten)]
    pub kind: RandomKind,
    pub seed: u64,
}

/// Decay of the α-mixing coefficients, known by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rate", rename_all = "snake_case")]
pub enum MixingRate {
    /// `α(k) = 0` for every `k > lag`.
    FiniteRange { lag: usize },
    /// `α(k) ≤ C ρ^k`.
    Geometric { rho: f64 },
}

impl MixingRate {
    /// Whether `α(n) = O(n^{-v})` holds. Both kinds decay faster than any power.
    pub fn satisfies_polynomial(&self, _v: f64) -> bool {
        match *self {
            MixingRate::FiniteRange { .. } => true,
            MixingRate::Geometric { rho } => rho < 1.0,
        }
    }
}

impl RandomEnvModel {
    pub fn iid(sampler: ParamSampler, seed: u64) -> Self {
        RandomEnvModel { kind: RandomKind::Iid { sampler }, seed }
    }

    pub fn m_dependent(sampler: ParamSampler, window: usize, seed: u64) -> Self {
        RandomEnvModel { kind: RandomKind::MDependent { sampler, window }, seed }
    }

    pub fn markov(states: Vec<SiteParams>, transition: Vec<Vec<f64>>, seed: u64) -> Self {
        RandomEnvModel { kind: RandomKind::Markov { states, transition }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            RandomKind::Iid { sampler } | RandomKind::MDependent { sampler, .. } => sampler.validate(),
            RandomKind::Markov { states, transition } => {
                for s in states {
                    s.build(Truncation::new(1, 0.5)?)?;
                }
                markov_rate(transition).map(|_| ())
            }
        }
    }

    pub fn mixing_rate(&self) -> Result<MixingRate> {
        Ok(match &self.kind {
            RandomKind::Iid { .. } => MixingRate::FiniteRange { lag: 0 },
            RandomKind::MDependent { window, .. } => MixingRate::FiniteRange { lag: *window },
            RandomKind::Markov { transition, .. } => MixingRate::Geometric { rho: markov_rate(transition)? },
        })
    }
}

type Matrix = Vec<Vec<f64>>;

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let s = a.len();
    (0..s).map(|i| (0..s).map(|j| (0..s).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

fn dobrushin(p: &Matrix) -> f64 {
    let s = p.len();
    let mut worst = 0.0_f64;
    for i in 0..s {
        for j in i + 1..s {
            let d: f64 = (0..s).map(|k| (p[i][k] - p[j][k]).abs()).sum();
            worst = worst.max(0.5 * d);
        }
    }
    worst
}

/// Validates the transition matrix and returns `ρ = δ(P^r)^{1/r}`, where
/// `P^r` is the first strictly positive power and `δ` the Dobrushin coefficient.
fn markov_rate(p: &Matrix) -> Result<f64> {
    let s = p.len();
    if s == 0 || p.iter().any(|row| row.len() != s) {
        return Err(Error::invalid("transition matrix must be square and non-empty"));
    }
    for (i, row) in p.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if row.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("transition row {i} is not a probability vector")));
        }
    }
    // Wielandt: a primitive matrix has a positive power of order ≤ (s−1)² + 1.
    let mut power = p.clone();
    for r in 1..=(s - 1) * (s - 1) + 1 {
        if power.iter().flatten().all(|v| *v > 0.0) {
            return Ok(dobrushin(&power).powf(1.0 / r as f64));
        }
        power = mat_mul(&power, p);
    }
    Err(Error::invalid("transition matrix must be irreducible and aperiodic"))
}

fn stationary(p: &Matrix) -> Vec<f64> {
    let s = p.len();
    let mut pi = vec![1.0 / s as f64; s];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..s).map(|j| (0..s).map(|i| pi[i] * p[i][j]).sum()).collect();
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-16 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|v| v / total).collect()
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn site_noise(seed: u64, x: usize, channels: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, NOISE_STREAM, x as u64);
    (0..channels).map(|_| r.random::<f64>()).collect()
}

/// A sampled environment together with what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedSample {
    pub environment: Environment,
    pub parameter_trace: Vec<SiteParams>,
    pub model: RandomEnvModel,
    pub seed: u64,
}

/// The site parameters at `0..sites`.
pub fn sample_parameters(model: &RandomEnvModel, sites: usize) -> Result<Vec<SiteParams>> {
    model.validate()?;
    let seed = model.seed;
    let params = match &model.kind {
        RandomKind::Iid { sampler } => {
            (0..sites).map(|x| sampler.map(&site_noise(seed, x, sampler.channels()))).collect::<Vec<_>>()
        }
        RandomKind::MDependent { sampler, window } => {
            let k = sampler.channels();
            let noise: Vec<Vec<f64>> = (0..sites + window).map(|x| site_noise(seed, x, k)).collect();
            (0..sites)
                .map(|x| {
                    let u: Vec<f64> = (0..k)
                        .map(|c| {
                            let s: f64 = noise[x..=x + window].iter().map(|v| v[c]).sum();
                            s - s.floor()
                        })
                        .collect();
                    sampler.map(&u)
                })
                .collect()
        }
        RandomKind::Markov { states, transition } => {
            let pi = stationary(transition);
            let mut state = 0;
            (0..sites)
                .map(|x| {
                    let u = site_noise(seed, x, 1)[0];
                    state = if x == 0 { pick(&pi, u) } else { pick(&transition[state], u) };
                    states[state]
                })
                .collect()
        }
    };
    if let RandomKind::Iid { sampler } | RandomKind::MDependent { sampler, .. } = &model.kind {
        if let Some((x, p)) = params.iter().enumerate().find(|(_, p)| !sampler.contains(p)) {
            return Err(Error::ParameterOutOfRange(format!("site {x}: {p:?} outside {sampler:?}")));
        }
    }
    Ok(params)
}

/// Samples sites `0..sites` of the quenched environment.
pub fn sample_environment(model: &RandomEnvModel, sites: usize, truncation: Truncation) -> Result<QuenchedSample> {
    let parameter_trace = sample_parameters(model, sites)?;
    let mut built: HashMap<(u8, u64, u64), Arc<TailSequence>> = HashMap::new();
    let mut tails = Vec::with_capacity(sites);
    for (x, p) in parameter_trace.iter().enumerate() {
        let site = match built.get(&p.key()) {
            Some(s) => Arc::clone(s),
            None => {
                let s = Arc::new(p.build(truncation).map_err(|e| match e {
                    Error::RootFinding { index, detail, .. } => Error::RootFinding { site: Some(x), index, detail },
                    other => other,
                })?);
                built.insert(p.key(), Arc::clone(&s));
                s
            }
        };
        tails.push(site);
    }
    let environment = Environment::from_sites(EnvModel::Random { model: model.clone() }, truncation, tails)?;
    Ok(QuenchedSample { environment, parameter_trace, model: model.clone(), seed: model.seed })
}

/// Empirical moment conditions of a quenched sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub q: f64,
    pub sites: usize,
    pub beta_star: f64,
    /// Empirical `E[A^q]` and `E[A'^q]`.
    pub a_moment: f64,
    pub a_prime_moment: f64,
    /// Which of the two moments the local limit theorem needs: `A` when `β_* > 3`, else `A'`.
    pub b_uses_a_prime: bool,
    pub b_moment: f64,
    /// Empirical mean of `K_x`.
    pub k_mean: f64,
    /// The sampler draws from a bounded parameter set, so every moment is finite.
    pub bounded_parameters: bool,
    pub mixing: MixingRate,
    /// The mixing exponent the local limit theorem requires, `2q/(q − 8)`, when `q > 8`.
    pub v_required: Option<f64>,
    pub slln_conditions: bool,
    pub clt_conditions: bool,
    pub llt_conditions: bool,
}

pub fn moment_report(sample: &QuenchedSample, beta: &Beta, q: f64) -> Result<MomentReport> {
    if !(q > 0.0) {
        return Err(Error::invalid(format!("moment order must be positive, got {q}")));
    }
    let env = &sample.environment;
    let diag = diagnostics(env, beta, env.len())?;
    let n = diag.sites.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| (0..diag.sites.len()).map(f).sum::<f64>() / n;
    let a_moment = mean(&|x| diag.sites[x].a.powf(q));
    let a_prime_moment = mean(&|x| diag.sites[x].a_prime.powf(q));
    let k_mean = mean(&|x| diag.sites[x].k);
    let beta_star = diag.beta_star;
    let b_uses_a_prime = beta_star <= 3.0;
    let b_moment = if b_uses_a_prime { a_prime_moment } else { a_moment };

    // Every supported sampler and Markov state set is bounded away from the
    // family limits, so the per-site constants are bounded.
    let bounded_parameters = true;
    let mixing = sample.model.mixing_rate()?;
    let v_required = (q > 8.0).then(|| 2.0 * q / (q - 8.0));
    let finite = bounded_parameters && a_moment.is_finite() && a_prime_moment.is_finite();
    Ok(MomentReport {
        q,
        sites: diag.sites.len(),
        beta_star,
        a_moment,
        a_prime_moment,
        b_uses_a_prime,
        b_moment,
        k_mean,
        bounded_parameters,
        mixing,
        v_required,
        slln_conditions: beta_star > 1.0 && finite,
        clt_conditions: beta_star > 2.0 && finite,
        llt_conditions: beta_star > 2.0
            && finite
            && k_mean.is_finite()
            && v_required.is_some_and(|v| mixing.satisfies_polynomial(v)),
    })
}
