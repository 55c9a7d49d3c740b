//! Weighted quantiles over `(value, mass)` multisets.
//!
//! Only eligible points may be returned as the estimate, but every point
//! (eligible or frozen) contributes its mass to the threshold sums.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Value of an index that is still active at this level.
    Eligible,
    /// Value inherited by a pruned subtree.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassPoint {
    pub value: f64,
    pub mass: f64,
    pub origin: Origin,
}

impl MassPoint {
    pub fn eligible(value: f64, mass: f64) -> Self {
        Self { value, mass, origin: Origin::Eligible }
    }

    pub fn frozen(value: f64, mass: f64) -> Self {
        Self { value, mass, origin: Origin::Frozen }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValueMassTable {
    points: Vec<MassPoint>,
}

/// One distinct value after merging ties.
#[derive(Clone, Copy, Debug)]
struct Level {
    value: f64,
    mass: f64,
    eligible: bool,
}

impl ValueMassTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<MassPoint>) -> Self {
        Self { points }
    }

    pub fn push(&mut self, p: MassPoint) {
        debug_assert!(p.mass >= 0.0, "negative mass {}", p.mass);
        self.points.push(p);
    }

    pub fn points(&self) -> &[MassPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.mass).sum()
    }

    pub fn eligible_mass(&self) -> f64 {
        self.points.iter().filter(|p| p.origin == Origin::Eligible).map(|p| p.mass).sum()
    }

    /// Distinct values in ascending order, masses summed over ties.
    fn merged(&self) -> Result<Vec<Level>> {
        if !self.points.iter().any(|p| p.origin == Origin::Eligible) {
            return Err(Error::EmptyTable);
        }
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut out: Vec<Level> = Vec::with_capacity(pts.len());
        for p in pts {
            let eligible = p.origin == Origin::Eligible;
            match out.last_mut() {
                Some(last) if last.value == p.value => {
                    last.mass += p.mass;
                    last.eligible |= eligible;
                }
                _ => out.push(Level { value: p.value, mass: p.mass, eligible }),
            }
        }
        Ok(out)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// `sup{ v eligible : Σ_{w ≥ v} mass(w) ≥ 1 − α }`, or the smallest eligible
/// value when no eligible value qualifies.
pub fn weighted_quantile_sup(t: &ValueMassTable, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let levels = t.merged()?;
    let target = 1.0 - alpha;
    let mut upper = 0.0;
    for l in levels.iter().rev() {
        upper += l.mass;
        if l.eligible && upper >= target {
            return Ok(l.value);
        }
    }
    Ok(levels.iter().find(|l| l.eligible).map(|l| l.value).expect("checked non-empty"))
}

/// `inf{ v eligible : Σ_{w ≤ v} mass(w) ≥ α }`, or the largest eligible value
/// when no eligible value qualifies.
pub fn weighted_quantile_inf(t: &ValueMassTable, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let levels = t.merged()?;
    let mut lower = 0.0;
    for l in &levels {
        lower += l.mass;
        if l.eligible && lower >= alpha {
            return Ok(l.value);
        }
    }
    Ok(levels.iter().rev().find(|l| l.eligible).map(|l| l.value).expect("checked non-empty"))
}
