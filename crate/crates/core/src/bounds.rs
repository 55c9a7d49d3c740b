//! Closed-form error bounds and budget-to-level estimates.
//!
//! All quantities grow with `L` and `M`, so overestimating either constant
//! only loosens them.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Constants of a problem: dimension, Lipschitz constant `L`, level-set
/// constant `M` and quantile level `α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemConstants {
    pub dim: usize,
    pub lipschitz: f64,
    pub level_set: f64,
    pub alpha: f64,
}

impl ProblemConstants {
    pub fn new(dim: usize, lipschitz: f64, level_set: f64, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!("L must be positive, got {lipschitz}")));
        }
        if !(level_set > 0.0 && level_set.is_finite()) {
            return Err(Error::InvalidArgument(format!("M must be positive, got {level_set}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
        }
        Ok(Self { dim, lipschitz, level_set, alpha })
    }

    /// Both constants multiplied by `factor`.
    pub fn inflated(&self, factor: f64) -> Self {
        Self { lipschitz: self.lipschitz * factor, level_set: self.level_set * factor, ..*self }
    }

    fn sqrt_d(&self) -> f64 {
        (self.dim as f64).sqrt()
    }

    fn three_d(&self) -> f64 {
        3f64.powi(self.dim as i32)
    }

    /// `(ln L / ln 3 + 2)²`.
    fn candidate_factor(&self) -> f64 {
        let t = self.lipschitz.ln() / 3f64.ln() + 2.0;
        t * t
    }

    /// Budget below which the unknown-constant bound is void for `d > 1`.
    pub fn unknown_threshold(&self) -> f64 {
        PI * PI / 3.0 * self.candidate_factor()
    }
}

/// Error bound with a known Lipschitz constant after `N` calls.
pub fn known_bound(c: &ProblemConstants, budget: u64) -> Result<f64> {
    let (l, m) = (c.lipschitz, c.level_set);
    if c.dim == 1 {
        if budget < 1 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        let e = 1.0 / (4.0 * m * l);
        Ok(0.5 * l * 3f64.powf(1.0 + e) * 3f64.powf(-e * budget as f64))
    } else {
        if budget <= 1 {
            return Err(Error::InvalidArgument("budget must exceed 1 when d > 1".into()));
        }
        let p = 1.0 / (c.dim as f64 - 1.0);
        let cc = 1.5 * l * c.sqrt_d() * (c.three_d() * m * l * c.sqrt_d()).powf(p);
        Ok(cc * (budget as f64 - 1.0).powf(-p))
    }
}

/// Error bound for the unknown-constant estimator after `N` calls.
pub fn unknown_bound(c: &ProblemConstants, budget: u64) -> Result<f64> {
    let (l, m) = (c.lipschitz, c.level_set);
    if l < 1.0 {
        return Err(Error::InvalidArgument(format!("the unknown-constant bound needs L ≥ 1, got {l}")));
    }
    let g = c.candidate_factor();
    if c.dim == 1 {
        if budget < 1 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        let cc = 18.0 * l * 3f64.powf(1.0 / (2.0 * m * l));
        let rho = 3f64.powf(-1.0 / (g * 2.0 * PI * PI * m * l));
        Ok(cc * rho.powf(budget as f64))
    } else {
        let n = budget as f64;
        let thr = c.unknown_threshold();
        if n <= thr {
            return Err(Error::InvalidArgument(format!(
                "the unknown-constant bound needs N > {thr:.3}, got {budget}"
            )));
        }
        let p = 1.0 / (c.dim as f64 - 1.0);
        let cc = 18.0 * l * c.sqrt_d() * (c.three_d() * m * l * c.sqrt_d() * PI * PI / 2.0 * g).powf(p);
        Ok(cc * (n - thr).powf(-p))
    }
}

/// Upper bound on the calls needed to reach level `k`.
pub fn calls_upper(c: &ProblemConstants, level: u32) -> f64 {
    let (l, m) = (c.lipschitz, c.level_set);
    let k = level as f64;
    if c.dim == 1 {
        1.0 + 4.0 * m * l * k
    } else {
        let dm1 = c.dim as f64 - 1.0;
        1.0 + c.three_d() * 2.0 * m * l * c.sqrt_d() * (3f64.powf(k * dm1) - 1.0) / (3f64.powf(dm1) - 1.0)
    }
}

/// Lower bound on the level reached with `N` calls (clamped at 0).
pub fn level_lower(c: &ProblemConstants, budget: u64) -> Result<u32> {
    let (l, m) = (c.lipschitz, c.level_set);
    if budget < 1 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let v = if c.dim == 1 {
        ((budget - 1) as f64 / (4.0 * m * l)).floor()
    } else {
        if budget <= 1 {
            return Err(Error::InvalidArgument("budget must exceed 1 when d > 1".into()));
        }
        let num = ((budget - 1) as f64).ln() - (c.three_d() * m * l * c.sqrt_d()).ln();
        (num / ((c.dim as f64 - 1.0) * 3f64.ln())).floor()
    };
    Ok(v.max(0.0) as u32)
}

/// `L·√d / (2·3^k)`.
pub fn bracket_halfwidth(lipschitz: f64, level: u32, dim: usize) -> f64 {
    lipschitz * crate::grid::half_radius(level, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pc(d: usize, l: f64, m: f64) -> ProblemConstants {
        ProblemConstants::new(d, l, m, 0.9).unwrap()
    }

    #[test]
    fn known_examples() {
        assert!((known_bound(&pc(1, 1.0, 2.0), 1).unwrap() - 1.5).abs() < 1e-12);
        assert!((known_bound(&pc(2, 1.0, 1.0), 2).unwrap() - 27.0).abs() < 1e-12);
        assert!(known_bound(&pc(2, 1.0, 1.0), 1).is_err());
    }

    #[test]
    fn unknown_examples() {
        let c = pc(1, 1.0, 1.0);
        let r = unknown_bound(&c, 2).unwrap() / unknown_bound(&c, 1).unwrap();
        assert!((r - 3f64.powf(-1.0 / (8.0 * PI * PI))).abs() < 1e-12);
        assert!(unknown_bound(&pc(1, 0.5, 1.0), 10).is_err());
        assert!(unknown_bound(&pc(2, 1.0, 1.0), 13).is_err());
    }

    #[test]
    fn unknown_dominates_known() {
        for c in [pc(1, 1.0, 1.0), pc(1, 1.61, 3.0), pc(2, 2f64.sqrt(), 0.6), pc(3, 2.0, 1.0)] {
            for n in (10..=10_000).step_by(37) {
                let Ok(u) = unknown_bound(&c, n) else { continue };
                assert!(u >= known_bound(&c, n).unwrap(), "{c:?} n={n}");
            }
        }
    }

    #[test]
    fn bounds_decrease_in_n() {
        for c in [pc(1, 1.5, 2.0), pc(2, 2.0, 0.5)] {
            let mut prev_k = f64::INFINITY;
            let mut prev_u = f64::INFINITY;
            for n in 30..300 {
                let k = known_bound(&c, n).unwrap();
                let u = unknown_bound(&c, n).unwrap();
                assert!(k > 0.0 && k < prev_k);
                assert!(u > 0.0 && u < prev_u);
                prev_k = k;
                prev_u = u;
            }
        }
    }

    #[test]
    fn calls_and_levels() {
        assert_eq!(calls_upper(&pc(1, 1.0, 2.0), 0), 1.0);
        assert_eq!(calls_upper(&pc(1, 1.0, 2.0), 3), 25.0);
        assert!((calls_upper(&pc(2, 1.0, 1.0), 1) - (1.0 + 18.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(level_lower(&pc(1, 1.0, 2.0), 9).unwrap(), 1);
        assert_eq!(level_lower(&pc(1, 1.0, 2.0), 1).unwrap(), 0);
        assert!(level_lower(&pc(2, 1.0, 1.0), 1).is_err());
    }

    #[test]
    fn halfwidths() {
        assert_eq!(bracket_halfwidth(1.0, 0, 1), 0.5);
        assert!((bracket_halfwidth(2.0, 2, 1) - 1.0 / 9.0).abs() < 1e-15);
        assert!((bracket_halfwidth(2f64.sqrt(), 1, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constants_validated() {
        assert!(ProblemConstants::new(0, 1.0, 1.0, 0.5).is_err());
        assert!(ProblemConstants::new(1, -1.0, 1.0, 0.5).is_err());
        assert!(ProblemConstants::new(1, 1.0, 0.0, 0.5).is_err());
        assert!(ProblemConstants::new(1, 1.0, 1.0, 1.0).is_err());
    }
}
