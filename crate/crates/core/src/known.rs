//! Quantile bracketing with a known Lipschitz constant.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{all_cells, half_radius, pow3, MultiIndex};
use crate::measure::ProductMeasure;
use crate::quantile::{weighted_quantile_sup, MassPoint, ValueMassTable};
use crate::refine::{band_survivors, run_engine, Candidate, EngineRun, Objective, RunOptions, StopReason};

/// Largest grid [`full_grid_estimate`] will enumerate.
pub const FULL_GRID_LIMIT: u128 = 1_000_000;

/// Surviving indices `Π^k` of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    pub level: u32,
    pub indices: Vec<MultiIndex>,
}

impl ActiveSet {
    pub fn root(dim: usize) -> Self {
        Self { level: 0, indices: vec![MultiIndex::root(dim)] }
    }
}

/// Call accounting of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetLedger {
    /// Ledger value at exit; exceeds the budget when the run stopped on budget.
    pub n_calls: u64,
    pub n_budget: u64,
    /// `|Π^{k+1}|` charged at each level.
    pub history: Vec<u64>,
}

impl BudgetLedger {
    /// `1 + Σ (3^d − 1)/3^d · |Π^l|` over the recorded history.
    pub fn replay(&self, dim: usize) -> u64 {
        let side = pow3(dim as u32);
        1 + self.history.iter().map(|&h| (side - 1) * h / side).sum::<u64>()
    }

    /// Calls needed to evaluate levels `0..=k`.
    pub fn calls_through(&self, dim: usize, k: u32) -> u64 {
        let side = pow3(dim as u32);
        1 + self.history.iter().take(k as usize).map(|&h| (side - 1) * h / side).sum::<u64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileBracket {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: u32,
    /// Calls charged for the levels actually evaluated; never above the budget.
    pub calls_used: u64,
    /// Distinct evaluations of `f`.
    pub evaluations: u64,
}

impl QuantileBracket {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, q: f64) -> bool {
        self.lower <= q && q <= self.upper
    }
}

#[derive(Clone, Debug)]
pub struct KnownRun {
    pub bracket: QuantileBracket,
    pub ledger: BudgetLedger,
    pub stop: StopReason,
    pub trace: EngineRun,
}

impl KnownRun {
    /// `(level, estimate, lower, upper)` for every computed level.
    pub fn level_brackets(&self, lipschitz: f64) -> Vec<(u32, f64, f64, f64)> {
        self.trace
            .levels
            .iter()
            .map(|l| {
                let w = lipschitz * l.half_radius;
                (l.level, l.estimate, l.estimate - w, l.estimate + w)
            })
            .collect()
    }
}

fn check_known(lipschitz: f64, budget: u64) -> Result<()> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    if budget < 1 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    Ok(())
}

/// Brackets the α-quantile of `f(X)` with at most `budget` calls to `f`.
pub fn run_known(
    f: Objective<'_>,
    lipschitz: f64,
    measure: &ProductMeasure,
    alpha: f64,
    budget: u64,
) -> Result<QuantileBracket> {
    Ok(run_known_with(f, lipschitz, measure, alpha, budget, &RunOptions::default())?.bracket)
}

pub fn run_known_with(
    f: Objective<'_>,
    lipschitz: f64,
    measure: &ProductMeasure,
    alpha: f64,
    budget: u64,
    opts: &RunOptions,
) -> Result<KnownRun> {
    check_known(lipschitz, budget)?;
    let trace = run_engine(f, measure, alpha, &[Candidate { lipschitz, budget }], opts)?;
    let last = trace.last();
    let cand = &trace.candidates[0];
    let dim = trace.dim;
    let ledger = BudgetLedger { n_calls: cand.n_calls, n_budget: budget, history: cand.charges.clone() };
    let w = lipschitz * last.half_radius;
    let bracket = QuantileBracket {
        estimate: last.estimate,
        lower: last.estimate - w,
        upper: last.estimate + w,
        level: last.level,
        calls_used: ledger.calls_through(dim, last.level),
        evaluations: trace.evaluations,
    };
    Ok(KnownRun { bracket, ledger, stop: trace.stop, trace })
}

/// One pruning step: keeps the indices whose value lies within `2Lδ^k` of
/// `estimate` and returns their children, plus the pruned indices.
pub fn prune(
    active: &ActiveSet,
    values: &HashMap<MultiIndex, f64>,
    estimate: f64,
    lipschitz: f64,
) -> (ActiveSet, Vec<MultiIndex>) {
    let dim = active.indices.first().map_or(1, MultiIndex::dim);
    let delta = half_radius(active.level, dim);
    let kept = band_survivors(&active.indices, |b| values[b], estimate, lipschitz, delta);
    let pruned = active.indices.iter().filter(|b| !kept.contains(b)).cloned().collect();
    let mut next: Vec<MultiIndex> = kept.iter().flat_map(|b| b.children()).collect();
    next.sort_unstable();
    (ActiveSet { level: active.level + 1, indices: next }, pruned)
}

/// The level-`k` estimate computed on the complete grid. Test reference only.
pub fn full_grid_estimate(f: Objective<'_>, measure: &ProductMeasure, alpha: f64, k: u32) -> Result<f64> {
    let dim = measure.dim();
    let cells = 3u128.checked_pow(k * dim as u32).unwrap_or(u128::MAX);
    if cells > FULL_GRID_LIMIT {
        return Err(Error::GridTooLarge { cells, limit: FULL_GRID_LIMIT });
    }
    let table = ValueMassTable::from_points(
        all_cells(k, dim)
            .iter()
            .map(|c| MassPoint::eligible(f(&c.center()), measure.cell_probability(c)))
            .collect(),
    );
    weighted_quantile_sup(&table, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(x: &[f64]) -> f64 {
        x[0]
    }

    #[test]
    fn full_grid_examples() {
        let u = ProductMeasure::uniform(1);
        let c = |x: &[f64]| 0.3 + x[0] * 0.0;
        assert_eq!(full_grid_estimate(&c, &u, 0.7, 0).unwrap(), 0.3);
        assert_eq!(full_grid_estimate(&id, &u, 0.5, 0).unwrap(), 0.5);
        // 0.5 lies in cell 13 of 27, centered at 27/54
        assert_eq!(full_grid_estimate(&id, &u, 0.5, 3).unwrap(), 27.0 / 54.0);
        let big = ProductMeasure::uniform(3);
        assert!(matches!(
            full_grid_estimate(&|x: &[f64]| x[0], &big, 0.5, 5),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn prune_examples() {
        let active = ActiveSet {
            level: 1,
            indices: (0..3).map(|b| MultiIndex::new(1, vec![b]).unwrap()).collect(),
        };
        let values: HashMap<_, _> =
            active.indices.iter().cloned().zip([0.17, 0.5, 0.83]).collect();
        let (next, pruned) = prune(&active, &values, 0.5, 1.0);
        assert_eq!(next.indices.len(), 9);
        assert!(pruned.is_empty());
        let (next, pruned) = prune(&active, &values, 0.5, 0.5);
        assert_eq!(next.indices.len(), 3);
        assert_eq!(pruned.len(), 2);
        assert_eq!(next.level, 2);
    }

    #[test]
    fn tiny_budget_returns_level_zero() {
        let u = ProductMeasure::uniform(2);
        let f = |x: &[f64]| x[0] + x[1];
        let b = run_known(&f, 2f64.sqrt(), &u, 0.999, 1).unwrap();
        assert_eq!(b.level, 0);
        assert_eq!(b.estimate, 1.0);
        assert_eq!(b.evaluations, 1);
        assert_eq!(b.calls_used, 1);
        assert!((b.half_width() - 2f64.sqrt() * 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn identity_median() {
        let u = ProductMeasure::uniform(1);
        let run = run_known_with(&id, 1.0, &u, 0.5, 200, &RunOptions::default()).unwrap();
        assert!(run.bracket.contains(0.5));
        assert!(run.bracket.calls_used <= 200);
        assert_eq!(run.ledger.replay(1), run.ledger.n_calls);
        let widths: Vec<f64> = run.level_brackets(1.0).iter().map(|b| b.3 - b.2).collect();
        assert!(widths.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_arguments() {
        let u = ProductMeasure::uniform(1);
        assert!(run_known(&id, 0.0, &u, 0.5, 10).is_err());
        assert!(run_known(&id, 1.0, &u, 0.5, 0).is_err());
        assert!(run_known(&id, 1.0, &u, 1.5, 10).is_err());
    }
}
