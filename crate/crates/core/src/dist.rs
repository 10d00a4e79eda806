//! Finitely supported probability mass functions on contiguous integer
//! ranges, with the mass lost to truncation carried as a deficit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Tolerance for `Σ probs + deficit = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A pmf on `offset..offset + probs.len()`. The deficit bounds the mass
/// that is not represented, wherever it lies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    offset: usize,
    probs: Vec<f64>,
    deficit: f64,
}

impl DiscreteDistribution {
    /// Validated constructor: non-negative atoms, zero atoms at either end
    /// stripped, and `Σ probs + deficit` within [`NORMALIZATION_TOL`] of 1.
    pub fn new(offset: usize, probs: Vec<f64>, deficit: f64) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) || !(deficit >= 0.0) {
            return Err(Error::invalid("probabilities and deficit must be finite and non-negative"));
        }
        let d = Self::from_raw(offset, probs, deficit);
        let total = d.total_mass() + d.deficit;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("mass plus deficit is {total}, not 1")));
        }
        Ok(d)
    }

    pub fn point_mass(at: usize) -> Self {
        DiscreteDistribution { offset: at, probs: vec![1.0], deficit: 0.0 }
    }

    /// Strips zero atoms from both ends without checking normalization.
    pub(crate) fn from_raw(offset: usize, mut probs: Vec<f64>, deficit: f64) -> Self {
        let start = probs.iter().position(|p| *p > 0.0).unwrap_or(probs.len());
        let end = probs.iter().rposition(|p| *p > 0.0).map_or(start, |i| i + 1);
        probs.truncate(end);
        probs.drain(..start);
        let offset = if probs.is_empty() { offset } else { offset + start };
        DiscreteDistribution { offset, probs, deficit }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// Largest support point (equal to `offset` for an empty pmf).
    pub fn max_support(&self) -> usize {
        self.offset + self.probs.len().saturating_sub(1)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        k.checked_sub(self.offset).and_then(|i| self.probs.get(i)).copied().unwrap_or(0.0)
    }

    /// `(k, P(k))` for every stored atom.
    pub fn atoms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, p)| (self.offset + i, *p))
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.probs.iter().rev().copied())
    }

    /// Stored mass at points `≤ k`.
    pub fn cdf(&self, k: usize) -> f64 {
        match k.checked_sub(self.offset) {
            None => 0.0,
            Some(i) => compensated_sum(self.probs[..(i + 1).min(self.probs.len())].iter().copied()),
        }
    }

    /// Mean of the stored mass, normalized by the stored total.
    pub fn mean(&self) -> f64 {
        let total = self.total_mass();
        compensated_sum(self.atoms().map(|(k, p)| k as f64 * p)) / total
    }

    /// Variance of the stored mass, normalized by the stored total.
    pub fn variance(&self) -> f64 {
        let total = self.total_mass();
        let m = self.mean();
        compensated_sum(self.atoms().map(|(k, p)| (k as f64 - m).powi(2) * p)) / total
    }

    /// `self ⊛ other`, then both ends trimmed by at most `trim_tol` each.
    /// The trimmed mass and both deficits add to the result's deficit.
    pub fn convolve(&self, other: &Self, trim_tol: f64) -> Self {
        let (offset, probs, beyond) = convolve_capped(self.offset, &self.probs, other.offset, &other.probs, None);
        debug_assert_eq!(beyond, 0.0);
        let (start, end, trimmed) = trim_ends(&probs, trim_tol);
        Self::from_raw(offset + start, probs[start..end].to_vec(), self.deficit + other.deficit + trimmed)
    }
}

/// Direct convolution of two pmfs, optionally dropping every point above
/// `cap`. Returns the offset, the atoms and the dropped mass.
pub(crate) fn convolve_capped(
    a_offset: usize,
    a: &[f64],
    b_offset: usize,
    b: &[f64],
    cap: Option<usize>,
) -> (usize, Vec<f64>, f64) {
    let offset = a_offset + b_offset;
    if a.is_empty() || b.is_empty() {
        return (offset, Vec::new(), 0.0);
    }
    let full_len = a.len() + b.len() - 1;
    let len = match cap {
        Some(c) if c < offset => return (offset, Vec::new(), a.iter().sum::<f64>() * b.iter().sum::<f64>()),
        Some(c) => full_len.min(c - offset + 1),
        None => full_len,
    };
    let mut out = vec![0.0; len];
    for (i, &p) in a.iter().enumerate() {
        if i >= len {
            break;
        }
        let m = b.len().min(len - i);
        for (o, &q) in out[i..i + m].iter_mut().zip(&b[..m]) {
            *o += p * q;
        }
    }
    let beyond = if len < full_len {
        let kept: f64 = out.iter().sum();
        (a.iter().sum::<f64>() * b.iter().sum::<f64>() - kept).max(0.0)
    } else {
        0.0
    };
    (offset, out, beyond)
}

/// Indices `start..end` that survive removing at most `tol` of mass from
/// each end, and the mass removed.
pub(crate) fn trim_ends(probs: &[f64], tol: f64) -> (usize, usize, f64) {
    let mut start = 0;
    let mut low = 0.0;
    while start < probs.len() && low + probs[start] <= tol {
        low += probs[start];
        start += 1;
    }
    let mut end = probs.len();
    let mut high = 0.0;
    while end > start && high + probs[end - 1] <= tol {
        high += probs[end - 1];
        end -= 1;
    }
    (start, end, low + high)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_trimming_and_validation() {
        let d = DiscreteDistribution::new(2, vec![0.0, 0.5, 0.5, 0.0], 0.0).unwrap();
        assert_eq!((d.offset(), d.probs()), (3, &[0.5, 0.5][..]));
        assert!(DiscreteDistribution::new(0, vec![0.5, 0.4], 0.0).is_err());
        assert!(DiscreteDistribution::new(0, vec![0.5, 0.4], 0.1).is_ok());
        assert!(DiscreteDistribution::new(0, vec![1.5, -0.5], 0.0).is_err());
    }

    #[test]
    fn moments_and_cdf() {
        let d = DiscreteDistribution::new(1, vec![0.5, 0.25, 0.25], 0.0).unwrap();
        assert_eq!(d.mean(), 1.75);
        assert_eq!(d.cdf(0), 0.0);
        assert_eq!(d.cdf(2), 0.75);
        assert_eq!(d.cdf(99), 1.0);
        assert_eq!(d.pmf(3), 0.25);
        assert_eq!(d.pmf(4), 0.0);
        assert!((d.variance() - (3.75 - 1.75 * 1.75)).abs() < 1e-15);
    }

    #[test]
    fn convolution_of_coins() {
        let c = DiscreteDistribution::new(0, vec![0.5, 0.5], 0.0).unwrap();
        let two = c.convolve(&c, 0.0);
        assert_eq!(two.probs(), &[0.25, 0.5, 0.25]);
        let trimmed = c.convolve(&c, 0.3);
        assert_eq!((trimmed.offset(), trimmed.probs(), trimmed.deficit()), (1, &[0.5][..], 0.5));
    }

    #[test]
    fn capped_convolution_tracks_dropped_mass() {
        let (off, p, beyond) = convolve_capped(1, &[0.5, 0.5], 1, &[0.5, 0.5], Some(3));
        assert_eq!((off, p.as_slice(), beyond), (2, &[0.25, 0.5][..], 0.25));
        let (_, p, beyond) = convolve_capped(5, &[1.0], 1, &[1.0], Some(3));
        assert!(p.is_empty() && beyond == 1.0);
    }
}
