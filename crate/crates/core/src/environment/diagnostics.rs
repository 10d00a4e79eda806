//! Environment diagnostics: the regularity constants `A_x`, `A'_x`, `K_x`,
//! sojourn moments, cumulative means and variances of the hitting times,
//! the generalized inverse `M_n`, and the residuals of the averaged
//! moments against their limits.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Environment, SiteGenerator, TailSequence};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, RunningSum};

/// The exponent function `β(x) > 1`. Always supplied by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Beta {
    Constant(f64),
    PerSite(Vec<f64>),
}

impl Beta {
    pub fn at(&self, x: usize) -> Result<f64> {
        let b = match self {
            Beta::Constant(b) => *b,
            Beta::PerSite(v) => *v.get(x).ok_or_else(|| Error::invalid(format!("β(x) not supplied for site {x}")))?,
        };
        if b > 1.0 && b.is_finite() {
            Ok(b)
        } else {
            Err(Error::invalid(format!("β({x}) = {b} must exceed 1")))
        }
    }

    /// The exponents the generating families come with: `β` for power-law
    /// sites and `1/α` for LSV sites. Other families have no natural choice.
    pub fn from_generators(env: &Environment) -> Result<Beta> {
        env.sites()
            .enumerate()
            .map(|(x, s)| match s.generator() {
                SiteGenerator::PowerLaw { beta } => Ok(beta),
                SiteGenerator::Lsv { alpha, .. } => Ok(1.0 / alpha),
                other => {
                    Err(Error::invalid(format!("site {x} ({other:?}) has no natural β(x); supply one explicitly")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Beta::PerSite)
    }
}

/// Moments of one sojourn time `τ_x`, each as a point value and an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteMoments {
    /// `m_x = E τ_x = Σ_n ω_n`.
    pub m: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    /// `E τ_x² = Σ_n (2n+1) ω_n`, by direct pmf summation.
    pub second: f64,
    /// The alternative closed form `Σ_n (2n+3) ω_n`; exceeds `second` by `2 m_x`.
    pub second_alt: f64,
    /// `s_x² = Var τ_x`.
    pub s2: f64,
    pub s2_lo: f64,
    pub s2_hi: f64,
}

impl SiteMoments {
    pub fn of(site: &TailSequence) -> SiteMoments {
        let w = site.values();
        let n_last = w.len() - 1;
        let d = site.deficit();
        let tail = site.tail_sums();
        // Stored terms plus ω_{N+1} = d; summed from the small end.
        let first = compensated_sum(std::iter::once(d).chain(w.iter().rev().copied()));
        let weighted = |shift: f64| {
            compensated_sum(
                (0..=n_last + 1).rev().map(|n| (2.0 * n as f64 + shift) * if n <= n_last { w[n] } else { d }),
            )
        };
        let second_stored = weighted(1.0);
        let second_alt_stored = weighted(3.0);

        let m_lo = first;
        let m = first + tail.first_est;
        let m_hi = first + tail.first_hi;
        let second = second_stored + if tail.second_est.is_finite() { tail.second_est } else { 0.0 };
        let second_alt =
            second_alt_stored + if tail.second_est.is_finite() { tail.second_est + 2.0 * tail.first_est } else { 0.0 };
        let s2 = (second - m * m).max(0.0);
        let s2_lo = (second_stored - m_hi * m_hi).max(0.0);
        let s2_hi = second_stored + tail.second_hi - m_lo * m_lo;
        SiteMoments { m, m_lo, m_hi, second, second_alt, s2, s2_lo, s2_hi }
    }

    /// False when the variance bound is infinite (the family has no finite
    /// second moment, or nothing is known about the unstored tail).
    pub fn variance_bounded(&self) -> bool {
        self.s2_hi.is_finite()
    }
}

/// Per-site diagnostic values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteDiagnostics {
    pub x: usize,
    pub beta: f64,
    /// `A_x = (sup_n n^β ω_n) ∨ 1` over the available indices.
    pub a: f64,
    /// `A'_x = (sup_n n^{β+1} (ω_{n−1} − ω_n)) ∨ 1`.
    pub a_prime: f64,
    /// True when the supremum defining `A_x` (or `A'_x`) exceeds 1 and is
    /// attained at the last available index, so truncation may hide a larger value.
    pub a_truncated: bool,
    pub a_prime_truncated: bool,
    pub k: f64,
    pub moments: SiteMoments,
}

/// Diagnostics over the site prefix `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDiagnostics {
    pub beta_star: f64,
    pub sites: Vec<SiteDiagnostics>,
    /// `μ_x = Σ_{w<x} m_w` for `x = 0..=len`, with interval bounds.
    pub mu: Vec<f64>,
    pub mu_lo: Vec<f64>,
    pub mu_hi: Vec<f64>,
    /// `σ_x² = Σ_{w<x} s_w²` for `x = 0..=len`, with interval bounds.
    pub sigma2: Vec<f64>,
    pub sigma2_lo: Vec<f64>,
    pub sigma2_hi: Vec<f64>,
    /// `M_n = inf{x : μ_x ≥ n}` for `n = 0..=⌊μ_len⌋`.
    pub m_n: Vec<usize>,
    pub reference_mu: f64,
    pub reference_sigma2: f64,
    /// `θ₁(x) = μ_x/x − μ̂` and `θ₂(x) = σ_x²/x − σ̂²`, stored at index `x − 1`.
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

fn sup_with_argmax(terms: impl Iterator<Item = (usize, f64)>) -> (f64, usize) {
    terms.fold((f64::NEG_INFINITY, 0), |(best, at), (n, v)| if v > best { (v, n) } else { (best, at) })
}

fn site_diagnostics(x: usize, site: &TailSequence, beta: f64) -> SiteDiagnostics {
    let last = site.last_index() + 1; // ω_{N+1} is known
    let omega = |n: usize| site.omega(n).unwrap_or(0.0);

    let (a_sup, a_at) = sup_with_argmax((1..=last).map(|n| (n, (n as f64).powf(beta) * omega(n))));
    let (ap_sup, ap_at) =
        sup_with_argmax((1..=last).map(|n| (n, (n as f64).powf(beta + 1.0) * (omega(n - 1) - omega(n)))));
    let has_tail = site.deficit() > 0.0;

    let ratio = |num: f64, den: f64| {
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    };
    let d12 = omega(1) - omega(2);
    let k_sup = (2..last.max(2)).map(|n| ratio(omega(n) - omega(n + 1), d12)).fold(0.0_f64, f64::max);
    let k = k_sup + ratio(d12, 1.0 - omega(1));

    SiteDiagnostics {
        x,
        beta,
        a: a_sup.max(1.0),
        a_prime: ap_sup.max(1.0),
        a_truncated: has_tail && a_sup > 1.0 && a_at == last,
        a_prime_truncated: has_tail && ap_sup > 1.0 && ap_at == last,
        k,
        moments: SiteMoments::of(site),
    }
}

/// Computes the diagnostics of sites `0..len` under the exponent function `beta`.
/// Residuals are taken against the averages at the largest site; see
/// [`EnvDiagnostics::with_reference`] for caller-supplied limits.
pub fn diagnostics(env: &Environment, beta: &Beta, len: usize) -> Result<EnvDiagnostics> {
    if len == 0 {
        return Err(Error::invalid("diagnostics need a non-empty site range"));
    }
    if len > env.len() {
        return Err(Error::SiteOutOfRange { site: len - 1, available: env.len() });
    }

    // Shared sites with the same β are evaluated once.
    let mut cache: HashMap<(usize, u64), SiteDiagnostics> = HashMap::new();
    let mut sites = Vec::with_capacity(len);
    for x in 0..len {
        let b = beta.at(x)?;
        let key = (std::sync::Arc::as_ptr(env.shared_site(x)) as usize, b.to_bits());
        let mut diag = cache.entry(key).or_insert_with(|| site_diagnostics(x, env.shared_site(x), b)).clone();
        diag.x = x;
        sites.push(diag);
    }
    let beta_star = sites.iter().map(|s| s.beta).fold(f64::INFINITY, f64::min);

    let cumulative = |f: &dyn Fn(&SiteMoments) -> f64| {
        let mut acc = RunningSum::default();
        let mut out = Vec::with_capacity(len + 1);
        out.push(0.0);
        for s in &sites {
            acc.add(f(&s.moments));
            out.push(acc.value());
        }
        out
    };
    let mu = cumulative(&|m| m.m);
    let mu_lo = cumulative(&|m| m.m_lo);
    let mu_hi = cumulative(&|m| m.m_hi);
    let sigma2 = cumulative(&|m| m.s2);
    let sigma2_lo = cumulative(&|m| m.s2_lo);
    let sigma2_hi = cumulative(&|m| m.s2_hi);

    let m_n = generalized_inverse(&mu);
    let reference_mu = mu[len] / len as f64;
    let reference_sigma2 = sigma2[len] / len as f64;

    let mut diag = EnvDiagnostics {
        beta_star,
        sites,
        mu,
        mu_lo,
        mu_hi,
        sigma2,
        sigma2_lo,
        sigma2_hi,
        m_n,
        reference_mu,
        reference_sigma2,
        theta1: Vec::new(),
        theta2: Vec::new(),
    };
    diag.recompute_residuals();
    Ok(diag)
}

/// `M_n = inf{x ≥ 0 : μ_x ≥ n}` for every `n ≤ μ_last`.
fn generalized_inverse(mu: &[f64]) -> Vec<usize> {
    let top = mu[mu.len() - 1];
    let n_max = if top.is_finite() { top.floor() as usize } else { 0 };
    let mut out = Vec::with_capacity(n_max + 1);
    let mut x = 0;
    for n in 0..=n_max {
        while mu[x] < n as f64 {
            x += 1;
        }
        out.push(x);
    }
    out
}

impl EnvDiagnostics {
    /// Number of sites covered.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `M_n`, if `n` is within the covered range.
    pub fn generalized_inverse(&self, n: usize) -> Option<usize> {
        self.m_n.get(n).copied()
    }

    pub fn theta1(&self, x: usize) -> Option<f64> {
        x.checked_sub(1).and_then(|i| self.theta1.get(i).copied())
    }

    pub fn theta2(&self, x: usize) -> Option<f64> {
        x.checked_sub(1).and_then(|i| self.theta2.get(i).copied())
    }

    /// Replaces the fitted limits by caller-supplied `μ` and `σ²`.
    pub fn with_reference(mut self, mu: f64, sigma2: f64) -> Self {
        self.reference_mu = mu;
        self.reference_sigma2 = sigma2;
        self.recompute_residuals();
        self
    }

    /// True when some site's variance interval is unbounded.
    pub fn variance_unbounded(&self) -> bool {
        self.sites.iter().any(|s| !s.moments.variance_bounded())
    }

    fn recompute_residuals(&mut self) {
        let len = self.len();
        self.theta1 = (1..=len).map(|x| self.mu[x] / x as f64 - self.reference_mu).collect();
        self.theta2 = (1..=len).map(|x| self.sigma2[x] / x as f64 - self.reference_sigma2).collect();
    }
}

/// `L(x; u) = max_{|ℓ| ≤ u b(x)} |Σ_{w ∈ [x]_ℓ} (m_w − μ)|` with
/// `b(x) = (x log x)^{1/2}`, `[x]_ℓ = [x, x+ℓ−1]` for `ℓ ≥ 0` and
/// `[x+ℓ−1, x]` for `ℓ < 0`, clipped at site 0.
pub fn window_fluctuation(diag: &EnvDiagnostics, x: usize, u: f64, mu: f64) -> Result<f64> {
    if x < 2 {
        return Err(Error::invalid(format!("window fluctuation needs x ≥ 2, got {x}")));
    }
    if !(u > 0.0) {
        return Err(Error::invalid(format!("window half-width factor must be positive, got {u}")));
    }
    let xf = x as f64;
    let reach = (u * (xf * xf.ln()).sqrt()).floor() as usize;
    let len = diag.len();
    if x + reach > len {
        return Err(Error::SiteOutOfRange { site: x + reach - 1, available: len });
    }
    let dev = |w: usize| diag.sites[w].moments.m - mu;

    let mut best = 0.0_f64;
    // ℓ > 0: sites x..=x+ℓ−1.
    let mut acc = RunningSum::default();
    for w in x..x + reach {
        acc.add(dev(w));
        best = best.max(acc.value().abs());
    }
    // ℓ < 0: sites x+ℓ−1..=x, clipped at site 0.
    let mut acc = RunningSum::default();
    acc.add(dev(x));
    let mut low = x;
    for l in 1..=reach {
        let target = x.saturating_sub(l + 1);
        while low > target {
            low -= 1;
            acc.add(dev(low));
        }
        best = best.max(acc.value().abs());
    }
    Ok(best)
}
