//! Product probability measures on the unit cube.
//!
//! Each axis carries a one-dimensional law given by its CDF on `[0,1]`; the
//! probability of a box is the product of the per-axis interval masses.

use std::fmt;
use std::sync::Arc;

use libm::erfc;

use crate::error::{Error, Result};
use crate::grid::{pow3, MultiIndex};

/// Standard normal CDF, `Φ(z) = erfc(−z/√2)/2`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 − Φ(z)`, accurate in the upper tail.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `Φ(m + h) − Φ(m − h)` for small `h`, by 3-point Gauss–Legendre on the density.
fn std_normal_mass_narrow(m: f64, h: f64) -> f64 {
    const NODE: f64 = 0.774_596_669_241_483_4; // √(3/5)
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    h * (5.0 * pdf(m - NODE * h) + 8.0 * pdf(m) + 5.0 * pdf(m + NODE * h)) / 9.0
}

pub type CdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MarginalKind {
    Uniform,
    TruncatedNormal { mu: f64, sigma: f64 },
    UserCdf(CdfFn),
}

impl fmt::Debug for MarginalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalKind::Uniform => write!(f, "Uniform"),
            MarginalKind::TruncatedNormal { mu, sigma } => {
                write!(f, "TruncatedNormal {{ mu: {mu}, sigma: {sigma} }}")
            }
            MarginalKind::UserCdf(_) => write!(f, "UserCdf"),
        }
    }
}

/// A one-dimensional law on `[0,1]`.
#[derive(Clone, Debug)]
pub struct Marginal {
    kind: MarginalKind,
    // Normal CDF values at the truncation ends, cached for the truncated normal.
    lo_cdf: f64,
    hi_cdf: f64,
    lo_sf: f64,
    hi_sf: f64,
}

impl Marginal {
    pub fn uniform() -> Self {
        Self { kind: MarginalKind::Uniform, lo_cdf: 0.0, hi_cdf: 1.0, lo_sf: 1.0, hi_sf: 0.0 }
    }

    /// Normal(`mu`, `sigma²`) conditioned on `[0,1]`.
    pub fn truncated_normal(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "truncated normal needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        let a = -mu / sigma;
        let b = (1.0 - mu) / sigma;
        let m = Self {
            kind: MarginalKind::TruncatedNormal { mu, sigma },
            lo_cdf: std_normal_cdf(a),
            hi_cdf: std_normal_cdf(b),
            lo_sf: std_normal_sf(a),
            hi_sf: std_normal_sf(b),
        };
        if !(m.hi_cdf - m.lo_cdf > 0.0 || m.lo_sf - m.hi_sf > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncated normal(mu={mu}, sigma={sigma}) puts no representable mass on [0,1]"
            )));
        }
        Ok(m)
    }

    /// A law given by an arbitrary CDF. The caller guarantees `cdf(0)=0`,
    /// `cdf(1)=1`, monotonicity and continuity; [`Marginal::validate`] spot-checks it.
    pub fn from_cdf(cdf: CdfFn) -> Self {
        Self { kind: MarginalKind::UserCdf(cdf), lo_cdf: 0.0, hi_cdf: 1.0, lo_sf: 1.0, hi_sf: 0.0 }
    }

    pub fn kind(&self) -> &MarginalKind {
        &self.kind
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.kind {
            MarginalKind::Uniform => x,
            MarginalKind::TruncatedNormal { mu, sigma } => {
                if x == 0.0 {
                    return 0.0;
                }
                if x == 1.0 {
                    return 1.0;
                }
                let z = (x - mu) / sigma;
                let v = if z > 0.0 {
                    1.0 - (std_normal_sf(z) - self.hi_sf) / (self.lo_sf - self.hi_sf)
                } else {
                    (std_normal_cdf(z) - self.lo_cdf) / (self.hi_cdf - self.lo_cdf)
                };
                v.clamp(0.0, 1.0)
            }
            MarginalKind::UserCdf(cdf) => cdf(x).clamp(0.0, 1.0),
        }
    }

    /// `P(lo ≤ X ≤ hi)` for `0 ≤ lo ≤ hi ≤ 1`.
    ///
    /// For the truncated normal the difference is taken on whichever of the
    /// CDF or survival function is small on the interval, so masses of tiny
    /// cells deep in a tail keep their relative precision.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        if hi <= lo {
            return 0.0;
        }
        match &self.kind {
            MarginalKind::Uniform => hi - lo,
            MarginalKind::TruncatedNormal { mu, sigma } => {
                let zl = (lo - mu) / sigma;
                let zh = (hi - mu) / sigma;
                let m = if zh - zl < 1e-2 {
                    // narrow interval: integrate the density, avoiding cancellation
                    std_normal_mass_narrow(0.5 * (zl + zh), 0.5 * (zh - zl)) / self.normalizer()
                } else if zl >= 0.0 {
                    (std_normal_sf(zl) - std_normal_sf(zh)) / (self.lo_sf - self.hi_sf)
                } else {
                    (std_normal_cdf(zh) - std_normal_cdf(zl)) / (self.hi_cdf - self.lo_cdf)
                };
                m.max(0.0)
            }
            MarginalKind::UserCdf(_) => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }

    /// `P(|X − center| ≤ half_width)` for an interval inside `[0,1]`.
    ///
    /// Taking the interval by midpoint and half-width keeps the width exact
    /// for cells far narrower than the spacing of `f64` values near `center`.
    pub fn centered_mass(&self, center: f64, half_width: f64) -> f64 {
        match &self.kind {
            MarginalKind::Uniform => 2.0 * half_width,
            MarginalKind::TruncatedNormal { mu, sigma } if half_width / sigma < 5e-3 => {
                std_normal_mass_narrow((center - mu) / sigma, half_width / sigma) / self.normalizer()
            }
            _ => self.interval_mass(center - half_width, center + half_width),
        }
    }

    fn normalizer(&self) -> f64 {
        (self.hi_cdf - self.lo_cdf).max(self.lo_sf - self.hi_sf)
    }

    /// Smallest `x` with `cdf(x) ≥ u`, by bisection to `1e-12`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        if let MarginalKind::Uniform = self.kind {
            return u.clamp(0.0, 1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Spot-checks the CDF contract on a 1001-point grid.
    pub fn validate(&self) -> Result<()> {
        let c0 = self.cdf(0.0);
        let c1 = self.cdf(1.0);
        if c0.abs() > 1e-12 || (c1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "marginal CDF must satisfy cdf(0)=0 and cdf(1)=1, got {c0} and {c1}"
            )));
        }
        let mut prev = c0;
        for i in 1..=1000 {
            let v = self.cdf(i as f64 / 1000.0);
            if v < prev {
                return Err(Error::InvalidArgument(format!(
                    "marginal CDF decreases near x={}",
                    i as f64 / 1000.0
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Law of `X = (X_1, …, X_d)` with independent components.
#[derive(Clone, Debug)]
pub struct ProductMeasure {
    marginals: Vec<Marginal>,
}

impl ProductMeasure {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("product measure needs at least one axis".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn uniform(dim: usize) -> Self {
        Self { marginals: vec![Marginal::uniform(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// Probability of the closed box `∏ [lower_j, upper_j]`.
    pub fn box_probability(&self, lower: &[f64], upper: &[f64]) -> f64 {
        self.marginals
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(m, (lo, hi))| m.interval_mass(*lo, *hi))
            .product()
    }

    /// `P(X ∈ D_β^k)`.
    pub fn cell_probability(&self, cell: &MultiIndex) -> f64 {
        debug_assert_eq!(cell.dim(), self.dim(), "cell and measure dimensions differ");
        let half_width = 0.5 / pow3(cell.level()) as f64;
        self.marginals
            .iter()
            .zip(cell.center())
            .map(|(m, c)| m.centered_mass(c, half_width))
            .product()
    }

    /// Maps a point of `[0,1)^d` with uniform law to a draw of `X`.
    pub fn transform_uniform(&self, u: &[f64]) -> Vec<f64> {
        self.marginals.iter().zip(u).map(|(m, &u)| m.inverse_cdf(u)).collect()
    }
}
