//! Limit-theorem predictions and their errors against exact laws.
//!
//! With `μ_x = E T_x`, `σ_x² = Var T_x`, `μ = lim μ_x/x`, `σ² = lim σ_x²/x`
//! and `σ̃² = σ²/μ³`:
//! * law of large numbers: `X_n/n → 1/μ`;
//! * central limit theorem: `(X_n − n/μ)/(√n σ̃) ⇒ N(0, 1)`;
//! * local limit theorem: `P(X_n = x) ≈ μ^{-1} Σ_{ℓ=1}^n h_ℓ(x) ω^x_{n−ℓ}`
//!   with `h_ℓ` the `N(M_ℓ, ℓσ̃²)` density.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::environment::{EnvDiagnostics, Environment};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, RunningSum};
use crate::walk::{position_distributions, ExactOptions, HittingTimes, McResult};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Density of `N(mean, variance)` at `z`.
pub fn normal_density(mean: f64, variance: f64, z: f64) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!("normal density needs a positive variance, got {variance}")));
    }
    Ok(density(mean, variance, z))
}

fn density(mean: f64, variance: f64, z: f64) -> f64 {
    let q = (z - mean) * (z - mean) / (2.0 * variance);
    (-q - LN_SQRT_2PI - 0.5 * variance.ln()).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    let t = z.abs() / std::f64::consts::SQRT_2;
    if z < 0.0 {
        0.5 * erfc(t)
    } else {
        1.0 - 0.5 * erfc(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    /// Averages over the materialized prefix.
    Fitted,
    /// Closed-form values of the environment family.
    Analytic,
    Supplied,
}

/// `μ > 1`, `σ² > 0`, `σ̃² = σ²/μ³` and the residual rate exponent `η ∈ [0, ½)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub mu: f64,
    pub sigma2: f64,
    pub sigma_tilde2: f64,
    pub eta: f64,
    pub source: ParamSource,
}

impl LimitParams {
    pub fn new(mu: f64, sigma2: f64, eta: f64, source: ParamSource) -> Result<Self> {
        if sigma2 == 0.0 {
            return Err(Error::ZeroVariance("σ² = 0, so the walk cannot be standardized".into()));
        }
        if !(mu > 1.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("μ = {mu} is outside the hypothesis μ > 1")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("σ² must be positive and finite, got {sigma2}")));
        }
        if !(0.0..0.5).contains(&eta) {
            return Err(Error::invalid(format!("η must lie in [0, ½), got {eta}")));
        }
        Ok(LimitParams { mu, sigma2, sigma_tilde2: sigma2 / mu.powi(3), eta, source })
    }

    /// Closed-form values for environments with identical sites of a family
    /// whose moments are known in closed form (geometric sites).
    pub fn analytic(env: &Environment, eta: f64) -> Result<Self> {
        use crate::environment::EnvModel;
        match env.model() {
            EnvModel::Geometric { ratio } => {
                let r = *ratio;
                let mu = 1.0 / (1.0 - r);
                let sigma2 = r / ((1.0 - r) * (1.0 - r));
                Self::new(mu, sigma2, eta, ParamSource::Analytic)
            }
            other => Err(Error::invalid(format!("no closed-form limits for {other:?}"))),
        }
    }
}

/// Fitted parameters with the residual curves used to judge the hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub params: LimitParams,
    /// `θ_i(x)` for `x = 1..=X`.
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// `x^η (log x)^{1/2} θ_i(x)` for `x = 2..=X`.
    pub scaled_theta1: Vec<f64>,
    pub scaled_theta2: Vec<f64>,
}

/// Minimum prefix length accepted by [`fit_limit_params`].
pub const MIN_FIT_SITES: usize = 100;

/// `μ̂ = μ_X/X`, `σ̂² = σ_X²/X` at the largest materialized `X`.
///
/// Fails with [`Error::NotConverged`] when the variance of some sojourn is
/// not bounded (the family has no finite second moment, or the unstored
/// tail is unknown), since `σ_X²/X` then grows with the prefix.
pub fn fit_limit_params(diag: &EnvDiagnostics, eta: f64) -> Result<LimitFit> {
    let len = diag.len();
    if len < MIN_FIT_SITES {
        return Err(Error::invalid(format!("fitting needs at least {MIN_FIT_SITES} sites, got {len}")));
    }
    if let Some(s) = diag.sites.iter().find(|s| !s.moments.variance_bounded()) {
        return Err(Error::NotConverged(format!(
            "Var τ_{} has no finite bound (β_* = {}); σ_x²/x does not settle, so no σ² is fitted",
            s.x, diag.beta_star
        )));
    }
    let mu = diag.mu[len] / len as f64;
    let sigma2 = diag.sigma2[len] / len as f64;
    let params = LimitParams::new(mu, sigma2, eta, ParamSource::Fitted)?;
    let diag = diag.clone().with_reference(mu, sigma2);
    let scale = |theta: &[f64]| {
        (2..=len)
            .map(|x| {
                let xf = x as f64;
                xf.powf(eta) * xf.ln().sqrt() * theta[x - 1]
            })
            .collect::<Vec<_>>()
    };
    Ok(LimitFit {
        params,
        scaled_theta1: scale(&diag.theta1),
        scaled_theta2: scale(&diag.theta2),
        theta1: diag.theta1,
        theta2: diag.theta2,
    })
}

/// Predictor value at one site, bracketing the unknown tail terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub x: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Prediction {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// `μ^{-1} Σ_{ℓ=1}^n φ(x; M_ℓ, ℓσ̃²) ω^x_{n−ℓ}` for `x = 0..=min(n, X−1)`.
/// Where `n − ℓ` lies beyond the stored tail, `ω^x_{n−ℓ} ∈ [0, deficit]`.
pub fn llt_predictor(
    env: &Environment,
    params: &LimitParams,
    diag: &EnvDiagnostics,
    n: usize,
) -> Result<Vec<Prediction>> {
    if diag.m_n.len() <= n {
        return Err(Error::invalid(format!(
            "M_ℓ is only known for ℓ ≤ {}; diagnostics over more sites are needed for n = {n}",
            diag.m_n.len().saturating_sub(1)
        )));
    }
    let st2 = params.sigma_tilde2;
    let x_max = n.min(env.len() - 1);
    (0..=x_max)
        .map(|x| {
            let site = env.site(x)?;
            let (mut lo, mut hi) = (RunningSum::default(), RunningSum::default());
            for l in 1..=n {
                let var = l as f64 * st2;
                let dz = x as f64 - diag.m_n[l] as f64;
                if dz * dz > 1500.0 * var {
                    continue;
                }
                let h = density(diag.m_n[l] as f64, var, x as f64);
                let (w_lo, w_hi) = site.omega_bounds(n - l);
                lo.add(h * w_lo);
                hi.add(h * w_hi);
            }
            Ok(Prediction { x, lo: lo.value() / params.mu, hi: hi.value() / params.mu })
        })
        .collect()
}

/// One row of the local-limit report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LltRow {
    pub x: usize,
    pub exact: f64,
    pub pred_lo: f64,
    pub pred_hi: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    #[serde(rename = "E3")]
    pub e3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LltReport {
    pub n: usize,
    /// `√n sup_x |P(X_n = x) − predictor(x)|`, with the predictor at its midpoint.
    pub sup_err_scaled: f64,
    /// `√n sup_x` of the predictor half-width plus the exact-law error bound.
    pub uncertainty_scaled: f64,
    /// `Σ_x predictor(x)` at the midpoint.
    pub predictor_mass: f64,
    pub rows: Vec<LltRow>,
}

/// The three pieces of `P(T_x = n) − μ^{-1} h_n(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub x: usize,
    pub n: usize,
    pub hitting: f64,
    /// `f_x(n)`: the `N(μ_x, σ_x²)` density.
    pub f: f64,
    /// `g_x(n)`: the `N(μ_x, nσ²/μ)` density.
    pub g: f64,
    /// `μ^{-1} h_n(x)`.
    pub h_scaled: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    /// `(n − μ_x) − μ (M_n − x)`.
    pub centering: f64,
}

fn decompose(
    diag: &EnvDiagnostics,
    params: &LimitParams,
    x: usize,
    n: usize,
    hitting: f64,
) -> Result<Option<Decomposition>> {
    let (mu_x, s2_x) = (diag.mu[x], diag.sigma2[x]);
    let Some(&m_n) = diag.m_n.get(n) else {
        return Ok(None);
    };
    if x == 0 || s2_x <= 0.0 || n == 0 {
        return Ok(None);
    }
    let nf = n as f64;
    let f = density(mu_x, s2_x, nf);
    let g = density(mu_x, nf * params.sigma2 / params.mu, nf);
    let h_scaled = density(m_n as f64, nf * params.sigma_tilde2, x as f64) / params.mu;
    Ok(Some(Decomposition {
        x,
        n,
        hitting,
        f,
        g,
        h_scaled,
        e1: hitting - f,
        e2: f - g,
        e3: g - h_scaled,
        centering: (nf - mu_x) - params.mu * (m_n as f64 - x as f64),
    }))
}

/// Compares the exact law of `X_n` with the local-limit predictor and
/// decomposes `P(T_x = n) − μ^{-1} h_n(x)` at every site.
pub fn llt_report(
    env: &Environment,
    params: &LimitParams,
    diag: &EnvDiagnostics,
    n: usize,
    opts: ExactOptions,
) -> Result<LltReport> {
    let predictor = llt_predictor(env, params, diag, n)?;
    let exact = position_distributions(env, &[n], opts)?.remove(0);

    // P(T_x = n) for every x, from one capped pass.
    let mut hitting = Vec::with_capacity(predictor.len());
    let mut h = HittingTimes::new(env, opts, Some(n))?;
    for x in 0..predictor.len() {
        hitting.push(h.pmf(n));
        if x + 1 < predictor.len() {
            h.advance()?;
        }
    }

    let sqrt_n = (n as f64).sqrt();
    let mut sup_err = 0.0_f64;
    let mut uncertainty = 0.0_f64;
    let mut rows = Vec::with_capacity(predictor.len());
    for p in &predictor {
        let e = exact.dist.pmf(p.x);
        sup_err = sup_err.max((e - p.mid()).abs());
        uncertainty = uncertainty.max(p.half_width() + exact.bound(p.x));
        let d = decompose(diag, params, p.x, n, hitting[p.x])?;
        rows.push(LltRow {
            x: p.x,
            exact: e,
            pred_lo: p.lo,
            pred_hi: p.hi,
            e1: d.map_or(0.0, |d| d.e1),
            e2: d.map_or(0.0, |d| d.e2),
            e3: d.map_or(0.0, |d| d.e3),
        });
    }
    Ok(LltReport {
        n,
        sup_err_scaled: sqrt_n * sup_err,
        uncertainty_scaled: sqrt_n * uncertainty,
        predictor_mass: compensated_sum(predictor.iter().map(Prediction::mid)),
        rows,
    })
}

/// `E1, E2, E3` on `x ∈ xs` for every `n` in the stored support of `T_x`.
pub fn llt_error_decomposition(
    env: &Environment,
    params: &LimitParams,
    diag: &EnvDiagnostics,
    xs: &[usize],
    opts: ExactOptions,
) -> Result<Vec<Decomposition>> {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let Some(&x_max) = sorted.last() else {
        return Ok(Vec::new());
    };
    if x_max > diag.len() {
        return Err(Error::SiteOutOfRange { site: x_max, available: diag.len() });
    }
    let mut h = HittingTimes::new(env, opts, None)?;
    let mut out = Vec::new();
    for &x in &sorted {
        while h.site() < x {
            h.advance()?;
        }
        for (i, &p) in h.probs().iter().enumerate() {
            if let Some(d) = decompose(diag, params, x, h.offset() + i, p)? {
                out.push(d);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovRow {
    /// `n` for positions, `x` for hitting times.
    pub index: usize,
    pub distance: f64,
    /// Mass missing from the exact law; the true distance is within this of `distance`.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub params: LimitParams,
    /// `(X_n − n/μ)/(√n σ̃)` against `N(0, 1)`.
    pub positions: Vec<KolmogorovRow>,
    /// `(T_x − μ_x)/σ_x` against `N(0, 1)`, with exact `μ_x` and `σ_x²`.
    pub hitting_times: Vec<KolmogorovRow>,
}

/// `sup_z |F(z) − Φ(z)|` for a lattice law, checked on both sides of every atom.
fn kolmogorov(atoms: impl Iterator<Item = (usize, f64)>, center: f64, scale: f64) -> f64 {
    let mut cdf = RunningSum::default();
    let mut d = 0.0_f64;
    for (k, p) in atoms {
        let phi = normal_cdf((k as f64 - center) / scale);
        d = d.max((cdf.value() - phi).abs());
        cdf.add(p);
        d = d.max((cdf.value() - phi).abs());
    }
    d.min(1.0)
}

pub fn clt_report(
    env: &Environment,
    params: &LimitParams,
    diag: &EnvDiagnostics,
    n_grid: &[usize],
    x_grid: &[usize],
    opts: ExactOptions,
) -> Result<CltReport> {
    let sd = params.sigma_tilde2.sqrt();
    let laws = position_distributions(env, n_grid, opts)?;
    let positions = laws
        .iter()
        .map(|law| {
            let n = law.n as f64;
            KolmogorovRow {
                index: law.n,
                distance: kolmogorov(law.dist.atoms(), n / params.mu, n.sqrt() * sd),
                uncertainty: law.dist.deficit(),
            }
        })
        .collect();

    let mut xs = x_grid.to_vec();
    xs.sort_unstable();
    xs.dedup();
    let mut hitting_times = Vec::with_capacity(xs.len());
    let mut h = HittingTimes::new(env, opts, None)?;
    for &x in &xs {
        if x > diag.len() {
            return Err(Error::SiteOutOfRange { site: x, available: diag.len() });
        }
        let s2 = diag.sigma2[x];
        if !(s2 > 0.0) {
            return Err(Error::ZeroVariance(format!("σ_{x}² = 0, so T_{x} cannot be standardized")));
        }
        while h.site() < x {
            h.advance()?;
        }
        let law = h.distribution();
        hitting_times.push(KolmogorovRow {
            index: x,
            distance: kolmogorov(law.atoms(), diag.mu[x], s2.sqrt()),
            uncertainty: law.deficit(),
        });
    }
    Ok(CltReport { params: *params, positions, hitting_times })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnReport {
    pub mu: f64,
    /// False when `μ ≤ 1`, which the law-of-large-numbers hypothesis excludes.
    pub in_hypothesis: bool,
    pub times: Vec<usize>,
    /// Path average of `X_n/n` at each time.
    pub mean_ratio: Vec<f64>,
    /// `X_n/n` of every path at the last time.
    pub final_ratio: Vec<f64>,
    /// Per path, `max |X_n/n − 1/μ|` over the times `≥ tail_from`.
    pub tail_max_deviation: Vec<f64>,
    /// Share of paths whose final `|X_n/n − 1/μ|` is below `tolerance`.
    pub tolerance: f64,
    pub fraction_within: f64,
    /// `1/slope` of a least-squares line through the mean path.
    pub regression_mu: f64,
}

/// Law-of-large-numbers summary of Monte Carlo checkpoints.
pub fn slln_report(mu: f64, times: &[usize], mc: &McResult, tail_from: usize, tolerance: f64) -> Result<SllnReport> {
    if mc.checkpoints.is_empty() || times.is_empty() || mc.checkpoints.iter().any(|c| c.len() != times.len()) {
        return Err(Error::invalid("checkpoint records do not match the requested times"));
    }
    let target = 1.0 / mu;
    let paths = mc.checkpoints.len() as f64;
    let ratio = |c: &[usize], i: usize| c[i] as f64 / times[i] as f64;
    let mean_ratio: Vec<f64> =
        (0..times.len()).map(|i| mc.checkpoints.iter().map(|c| ratio(c, i)).sum::<f64>() / paths).collect();
    let last = times.len() - 1;
    let final_ratio: Vec<f64> = mc.checkpoints.iter().map(|c| ratio(c, last)).collect();
    let tail_max_deviation = mc
        .checkpoints
        .iter()
        .map(|c| {
            (0..times.len())
                .filter(|&i| times[i] >= tail_from)
                .map(|i| (ratio(c, i) - target).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let fraction_within = final_ratio.iter().filter(|r| (*r - target).abs() < tolerance).count() as f64 / paths;

    // Least squares of mean X_n on n.
    let mean_x: Vec<f64> = (0..times.len()).map(|i| mean_ratio[i] * times[i] as f64).collect();
    let k = times.len() as f64;
    let tbar = times.iter().map(|&t| t as f64).sum::<f64>() / k;
    let xbar = mean_x.iter().sum::<f64>() / k;
    let sxy: f64 = times.iter().zip(&mean_x).map(|(&t, &x)| (t as f64 - tbar) * (x - xbar)).sum();
    let sxx: f64 = times.iter().map(|&t| (t as f64 - tbar).powi(2)).sum();
    let regression_mu = if sxx > 0.0 { sxx / sxy } else { f64::NAN };

    Ok(SllnReport {
        mu,
        in_hypothesis: mu > 1.0,
        times: times.to_vec(),
        mean_ratio,
        final_ratio,
        tail_max_deviation,
        tolerance,
        fraction_within,
        regression_mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{diagnostics, Beta, Truncation};
    use crate::walk::{simulate_paths, McConfig, Record, Sampler};

    fn geometric(sites: usize) -> (Environment, EnvDiagnostics) {
        let env = Environment::geometric(0.5, sites, Truncation::default()).unwrap();
        let diag = diagnostics(&env, &Beta::Constant(3.0), sites).unwrap();
        (env, diag)
    }

    #[test]
    fn density_values() {
        assert!((normal_density(0.0, 1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-16);
        let peak = normal_density(3.0, 2.0, 3.0).unwrap();
        assert!((peak - (2.0 * std::f64::consts::PI * 2.0).powf(-0.5)).abs() < 1e-16);
        assert_eq!(normal_density(1.0, 2.0, 1.7).unwrap(), normal_density(1.0, 2.0, 0.3).unwrap());
        assert!(normal_density(0.0, 0.0, 0.0).is_err());
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn geometric_analytic_and_fitted_params_agree() {
        let (env, diag) = geometric(200);
        let a = LimitParams::analytic(&env, 0.0).unwrap();
        assert_eq!((a.mu, a.sigma2, a.sigma_tilde2), (2.0, 2.0, 0.25));
        let fit = fit_limit_params(&diag, 0.0).unwrap();
        assert_eq!(fit.params.mu, 2.0);
        assert!((fit.params.sigma2 - 2.0).abs() < 1e-12);
        assert!(fit.theta1.iter().all(|t| *t == 0.0));
        assert!(fit_limit_params(&geometric(50).1, 0.0).is_err());
    }

    #[test]
    fn predictor_at_one_step_is_single_term() {
        let (env, diag) = geometric(20);
        let p = LimitParams::analytic(&env, 0.0).unwrap();
        let pred = llt_predictor(&env, &p, &diag, 1).unwrap();
        for q in &pred {
            let expect = normal_density(diag.m_n[1] as f64, p.sigma_tilde2, q.x as f64).unwrap() / p.mu;
            assert_eq!(q.lo, expect);
            assert_eq!(q.hi, expect);
        }
    }

    #[test]
    fn telescoping_is_exact_to_rounding() {
        let (env, diag) = geometric(300);
        let p = LimitParams::analytic(&env, 0.0).unwrap();
        let rows = llt_error_decomposition(&env, &p, &diag, &[5, 50], ExactOptions::default()).unwrap();
        assert!(!rows.is_empty());
        for r in rows {
            let lhs = r.e1 + r.e2 + r.e3;
            assert!((lhs - (r.hitting - r.h_scaled)).abs() <= 1e-15, "{r:?}");
            assert!(r.centering.abs() <= p.mu + 1e-12);
        }
    }

    #[test]
    fn degenerate_walk_is_rejected() {
        let env = Environment::degenerate(200).unwrap();
        let diag = diagnostics(&env, &Beta::Constant(2.0), 200).unwrap();
        assert!(matches!(fit_limit_params(&diag, 0.0), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn heavy_tail_variance_is_not_fitted() {
        let env = Environment::power_law(1.5, 150, Truncation::new(2000, 1e-8).unwrap()).unwrap();
        let diag = diagnostics(&env, &Beta::Constant(1.5), 150).unwrap();
        assert!(matches!(fit_limit_params(&diag, 0.0), Err(Error::NotConverged(_))));
    }

    #[test]
    fn clt_distances_are_bounded() {
        let (env, diag) = geometric(400);
        let p = LimitParams::analytic(&env, 0.0).unwrap();
        let r = clt_report(&env, &p, &diag, &[20, 200], &[10, 100], ExactOptions::default()).unwrap();
        for row in r.positions.iter().chain(&r.hitting_times) {
            assert!((0.0..=1.0).contains(&row.distance));
        }
        assert!(r.positions[1].distance < r.positions[0].distance);
    }

    #[test]
    fn slln_on_degenerate_walk() {
        let env = Environment::degenerate(101).unwrap();
        let times = vec![10, 50, 100];
        let cfg = McConfig {
            paths: 3,
            horizon: 100,
            seed: 1,
            record: Record::Checkpoints { times: times.clone() },
            sampler: Sampler::SojournSum,
        };
        let mc = simulate_paths(&env, &cfg).unwrap();
        let r = slln_report(1.0, &times, &mc, 50, 0.01).unwrap();
        assert!(!r.in_hypothesis);
        assert!(r.final_ratio.iter().all(|v| *v == 1.0));
        assert!((r.regression_mu - 1.0).abs() < 1e-12);
    }
}
