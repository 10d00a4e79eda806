//! Two-branch intermittent maps `x + κ x^(α+1)` on `[0, c]` and the
//! backward orbit `c_n = g^{-n}(1)` of their neutral branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONSTRAINT_TOL: f64 = 1e-12;
const MAX_BISECTION_STEPS: usize = 400;
/// Default relative width at which bisection hands over to Newton polishing.
pub const DEFAULT_ROOT_TOL: f64 = 1e-13;

/// Parameters of the neutral branch `g(y) = y + κ y^(α+1)` with `g(c) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsvParams {
    pub alpha: f64,
    pub c: f64,
    pub kappa: f64,
}

impl LsvParams {
    /// Solves the constraint for `κ = (1 − c) / c^(α+1)`.
    pub fn from_alpha_c(alpha: f64, c: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::invalid(format!("LSV c must lie in (0,1), got {c}")));
        }
        let kappa = (1.0 - c) / c.powf(alpha + 1.0);
        Self::checked(alpha, c, kappa)
    }

    /// Solves the constraint `c + κ c^(α+1) = 1` for `c` by bisection.
    pub fn from_alpha_kappa(alpha: f64, kappa: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("LSV kappa must be positive, got {kappa}")));
        }
        let h = |y: f64| y + kappa * y.powf(alpha + 1.0) - 1.0;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = if h(hi).abs() < h(lo).abs() { hi } else { lo };
        Self::checked(alpha, c, kappa)
    }

    fn checked(alpha: f64, c: f64, kappa: f64) -> Result<Self> {
        let p = LsvParams { alpha, c, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.c > 0.0 && self.c < 1.0) || !(self.kappa > 0.0) {
            return Err(Error::invalid(format!("LSV parameters out of range: {self:?}")));
        }
        let residual = self.c + self.kappa * self.c.powf(self.alpha + 1.0) - 1.0;
        if residual.abs() > CONSTRAINT_TOL {
            return Err(Error::invalid(format!("LSV constraint c + κ c^(α+1) = 1 violated by {residual:e}")));
        }
        Ok(())
    }

    /// The neutral branch `g(y) = y + κ y^(α+1)`.
    pub fn branch(&self, y: f64) -> f64 {
        y + self.kappa * y.powf(self.alpha + 1.0)
    }

    fn branch_derivative(&self, y: f64) -> f64 {
        1.0 + self.kappa * (self.alpha + 1.0) * y.powf(self.alpha)
    }

    /// Solves `g(y) = target` on `[0, target]`: bisection to relative width
    /// `tol`, then Newton steps kept inside the final bracket.
    pub fn branch_inverse(&self, target: f64, tol: f64) -> Option<f64> {
        if !(target > 0.0) {
            return None;
        }
        let (mut lo, mut hi) = (0.0_f64, target);
        let mut steps = 0;
        while hi - lo > tol * lo {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.branch(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
            if steps > MAX_BISECTION_STEPS {
                return None;
            }
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..3 {
            let next = y - (self.branch(y) - target) / self.branch_derivative(y);
            if !(next >= lo && next <= hi) {
                break;
            }
            y = next;
        }
        Some(y)
    }

    /// Right-hand side of `n^{1/α} c_n ≤ c + c (c/(1−c))^{1/α} 2^{1/α + 1/α²}`.
    pub fn cn_bound(&self) -> f64 {
        let p = 1.0 / self.alpha;
        self.c + self.c * (self.c / (1.0 - self.c)).powf(p) * 2f64.powf(p + p * p)
    }

    /// Right-hand side of
    /// `n^{1/α+1}(c_{n−1} − c_n) ≤ (1−c) + c (c/(1−c))^{1/α} 2^{1 + 2/α + 1/α²}`.
    pub fn cn_difference_bound(&self) -> f64 {
        let p = 1.0 / self.alpha;
        (1.0 - self.c) + self.c * (self.c / (1.0 - self.c)).powf(p) * 2f64.powf(1.0 + 2.0 * p + p * p)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    // α = 1 is admitted so the quadratic branch y + y² can serve as a test case.
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("LSV alpha must lie in (0,1], got {alpha}")))
    }
}

/// Iterator over `c_1, c_2, …` with `c_1 = c` and `g(c_{n+1}) = c_n`.
pub struct CnSequence {
    params: LsvParams,
    tol: f64,
    next_index: usize,
    last: f64,
}

impl CnSequence {
    pub fn new(params: LsvParams, tol: f64) -> Result<Self> {
        params.validate()?;
        if !(f64::EPSILON..1.0).contains(&tol) {
            return Err(Error::invalid(format!(
                "root-finding tolerance must lie in [machine epsilon, 1), got {tol:e}"
            )));
        }
        Ok(CnSequence { params, tol, next_index: 1, last: 1.0 })
    }
}

impl Iterator for CnSequence {
    type Item = Result<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        let index = self.next_index;
        let value = if index == 1 { Some(self.params.c) } else { self.params.branch_inverse(self.last, self.tol) };
        match value {
            Some(v) if v > 0.0 && v < self.last => {
                self.last = v;
                self.next_index += 1;
                Some(Ok(v))
            }
            _ => {
                self.next_index = usize::MAX;
                Some(Err(Error::RootFinding {
                    site: None,
                    index,
                    detail: format!("no strictly smaller preimage of {:e}", self.last),
                }))
            }
        }
    }
}

/// The first `count` backward-orbit points `c_1..c_count`.
pub fn lsv_cn_sequence(params: LsvParams, count: usize, tol: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    CnSequence::new(params, tol)?.take(count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> LsvParams {
        LsvParams::from_alpha_kappa(1.0, 1.0).unwrap()
    }

    #[test]
    fn constraint_solved_both_ways() {
        let p = golden();
        assert!((p.c - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        let q = LsvParams::from_alpha_c(0.33, 0.5).unwrap();
        assert!((q.kappa - 1.2570133745218284).abs() < 1e-13);
        let back = LsvParams::from_alpha_kappa(0.33, q.kappa).unwrap();
        assert!((back.c - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LsvParams::from_alpha_c(0.0, 0.5).is_err());
        assert!(LsvParams::from_alpha_c(1.5, 0.5).is_err());
        assert!(LsvParams::from_alpha_c(0.3, 1.0).is_err());
        assert!(LsvParams::from_alpha_kappa(0.3, -1.0).is_err());
        let bad = LsvParams { alpha: 0.3, c: 0.5, kappa: 1.0 };
        assert!(bad.validate().is_err());
        assert!(lsv_cn_sequence(golden(), 3, 1e-20).is_err());
    }

    #[test]
    #[allow(clippy::excessive_precision)] // oracle digits kept as frozen
    fn golden_ratio_orbit_matches_bisection_oracle() {
        // Frozen from a 40-digit bisection of y + y² = c_{n-1}.
        let oracle = [0.61803398874989485, 0.43168341659057925, 0.32564121541416478, 0.25871023152068062];
        let cs = lsv_cn_sequence(golden(), 4, 1e-13).unwrap();
        assert_eq!(cs[0], golden().c);
        for (got, want) in cs.iter().zip(oracle) {
            assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn orbit_is_decreasing_and_consistent() {
        let p = LsvParams::from_alpha_c(0.25, 0.5).unwrap();
        let cs = lsv_cn_sequence(p, 2000, 1e-13).unwrap();
        let mut prev = 1.0;
        for &c in &cs {
            assert!(c < prev);
            assert!((p.branch(c) - prev).abs() <= 1e-12 * prev);
            prev = c;
        }
    }
}
