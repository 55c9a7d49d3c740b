//! Budgeted adaptive refinement shared by the known- and unknown-constant
//! estimators.
//!
//! A run tracks one active set per Lipschitz candidate. At every level the
//! union of all active sets is evaluated, the pooled quantile estimate is
//! taken over that union plus the frozen mass of pruned subtrees, and each
//! live candidate keeps the children of the indices whose value lies within
//! `2·L·δ^k` of the estimate. A candidate retires once its call ledger exceeds
//! its budget; from then on its set only follows center children, which costs
//! no evaluations. With a single candidate this is the known-constant
//! algorithm.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{half_radius, pow3, MultiIndex, MAX_LEVEL};
use crate::measure::ProductMeasure;
use crate::quantile::{weighted_quantile_inf, weighted_quantile_sup, MassPoint, ValueMassTable};

/// Function under study, evaluated on the unit cube.
pub type Objective<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// An owned objective that can be shared across threads.
pub type SharedObjective = std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Default depth cap.
///
/// Past level 22 the bracket half-width drops below ~1e-11, where rounding in
/// the cell masses starts to compete with the grid resolution.
pub const DEFAULT_MAX_LEVEL: u32 = 22;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub lipschitz: f64,
    pub budget: u64,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Stop after computing the estimate at this level.
    pub max_level: u32,
    /// Keep every candidate's active set in the level records.
    pub record_sets: bool,
    /// Evaluate new points on the rayon pool once a level has this many.
    pub parallel_threshold: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_level: DEFAULT_MAX_LEVEL, record_sets: false, parallel_threshold: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Every candidate exceeded its call budget.
    Budget,
    /// The depth cap was reached first.
    DepthLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Retirement {
    /// The call ledger went over budget after charging the next level.
    OverBudget,
    /// No active index survived pruning, so nothing is left to refine.
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct CandidateTrace {
    pub lipschitz: f64,
    pub budget: u64,
    /// Final ledger value, including the charge that caused retirement.
    pub n_calls: u64,
    /// Level whose charge retired the candidate.
    pub retired_at: Option<u32>,
    pub retirement: Option<Retirement>,
    /// `|Π^{k+1}|` charged at each level while live.
    pub charges: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct LevelRecord {
    pub level: u32,
    /// Sup-form estimate (the one returned).
    pub estimate: f64,
    pub estimate_inf: f64,
    pub half_radius: f64,
    /// Size of the pooled eligible set.
    pub eligible: usize,
    pub eligible_mass: f64,
    pub frozen_mass: f64,
    /// Distinct `f` evaluations performed at this level.
    pub new_evaluations: u64,
    /// Per candidate: live when the level started.
    pub live: Vec<bool>,
    pub active_sizes: Vec<usize>,
    /// Per candidate: indices kept by the band test (0 when retired).
    pub survivors: Vec<usize>,
    /// Per candidate ledger after this level's charge.
    pub n_calls: Vec<u64>,
    pub active_sets: Option<Vec<Vec<MultiIndex>>>,
}

impl LevelRecord {
    pub fn total_mass(&self) -> f64 {
        self.eligible_mass + self.frozen_mass
    }
}

#[derive(Clone, Debug)]
pub struct EngineRun {
    pub dim: usize,
    pub levels: Vec<LevelRecord>,
    pub candidates: Vec<CandidateTrace>,
    pub evaluations: u64,
    pub stop: StopReason,
}

impl EngineRun {
    pub fn last(&self) -> &LevelRecord {
        self.levels.last().expect("a run computes at least level 0")
    }
}

/// Indices of `active` whose value lies in the closed band
/// `[estimate − 2Lδ, estimate + 2Lδ]`.
pub fn band_survivors(
    active: &[MultiIndex],
    value: impl Fn(&MultiIndex) -> f64,
    estimate: f64,
    lipschitz: f64,
    delta: f64,
) -> Vec<&MultiIndex> {
    let half = 2.0 * lipschitz * delta;
    let (lo, hi) = (estimate - half, estimate + half);
    active
        .iter()
        .filter(|b| {
            let v = value(b);
            v >= lo && v <= hi
        })
        .collect()
}

fn sorted_union(sets: &[Vec<MultiIndex>]) -> Vec<MultiIndex> {
    let mut all: Vec<MultiIndex> = sets.iter().flatten().cloned().collect();
    all.sort_unstable();
    all.dedup();
    all
}

fn check_inputs(dim: usize, alpha: f64, candidates: &[Candidate], opts: &RunOptions) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("at least one Lipschitz candidate is required".into()));
    }
    for c in candidates {
        if !(c.lipschitz > 0.0 && c.lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Lipschitz constant must be finite and positive, got {}",
                c.lipschitz
            )));
        }
        if c.budget < 1 {
            return Err(Error::InvalidArgument("every candidate needs a budget of at least 1".into()));
        }
    }
    if opts.max_level > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "max_level {} exceeds the supported maximum {MAX_LEVEL}",
            opts.max_level
        )));
    }
    Ok(())
}

/// Runs the pooled refinement until every candidate retires or the depth cap
/// is reached.
pub fn run_engine(
    f: Objective<'_>,
    measure: &ProductMeasure,
    alpha: f64,
    candidates: &[Candidate],
    opts: &RunOptions,
) -> Result<EngineRun> {
    let dim = measure.dim();
    check_inputs(dim, alpha, candidates, opts)?;
    let fan = pow3(dim as u32) - 1;

    let mut sets: Vec<Vec<MultiIndex>> = vec![vec![MultiIndex::root(dim)]; candidates.len()];
    let mut live = vec![true; candidates.len()];
    let mut traces: Vec<CandidateTrace> = candidates
        .iter()
        .map(|c| CandidateTrace {
            lipschitz: c.lipschitz,
            budget: c.budget,
            n_calls: 1,
            retired_at: None,
            retirement: None,
            charges: Vec::new(),
        })
        .collect();
    let mut memo: HashMap<MultiIndex, f64> = HashMap::new();
    let mut frozen: Vec<MassPoint> = Vec::new();
    let mut frozen_mass = 0.0;
    let mut evaluations = 0u64;
    let mut levels = Vec::new();
    let mut union = sorted_union(&sets);

    for k in 0..=opts.max_level {
        // evaluate the pooled set, reusing center-child values
        let keys: Vec<MultiIndex> = union.iter().map(MultiIndex::canonical).collect();
        let mut missing: Vec<&MultiIndex> = keys.iter().filter(|c| !memo.contains_key(*c)).collect();
        missing.sort_unstable();
        missing.dedup();
        let fresh: Vec<(MultiIndex, f64)> = if missing.len() >= opts.parallel_threshold {
            missing.par_iter().map(|c| ((*c).clone(), f(&c.center()))).collect()
        } else {
            missing.iter().map(|c| ((*c).clone(), f(&c.center()))).collect()
        };
        let new_evaluations = fresh.len() as u64;
        evaluations += new_evaluations;
        memo.extend(fresh);
        let values: Vec<f64> = keys.iter().map(|c| memo[c]).collect();
        let masses: Vec<f64> = union.iter().map(|b| measure.cell_probability(b)).collect();

        let mut table = ValueMassTable::from_points(frozen.clone());
        for (&v, &m) in values.iter().zip(&masses) {
            table.push(MassPoint::eligible(v, m));
        }
        let estimate = weighted_quantile_sup(&table, alpha)?;
        let estimate_inf = weighted_quantile_inf(&table, alpha)?;
        let eligible_mass: f64 = masses.iter().sum();
        let delta = half_radius(k, dim);
        let value_of = |b: &MultiIndex| {
            let pos = union.binary_search(b).expect("active index belongs to the pooled set");
            values[pos]
        };

        let live_at_start = live.clone();
        let active_sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
        let recorded_sets = opts.record_sets.then(|| sets.clone());
        let mut survivors = vec![0usize; candidates.len()];

        let at_cap = k == opts.max_level;
        let mut next_sets: Vec<Vec<MultiIndex>> = Vec::with_capacity(sets.len());
        if !at_cap {
            for (j, cand) in candidates.iter().enumerate() {
                if live[j] {
                    let kept = band_survivors(&sets[j], value_of, estimate, cand.lipschitz, delta);
                    survivors[j] = kept.len();
                    let mut next: Vec<MultiIndex> = kept.iter().flat_map(|b| b.children()).collect();
                    next.sort_unstable();
                    let charge = next.len() as u64;
                    traces[j].charges.push(charge);
                    traces[j].n_calls += fan * kept.len() as u64;
                    if traces[j].n_calls > cand.budget {
                        live[j] = false;
                        traces[j].retired_at = Some(k);
                        traces[j].retirement = Some(Retirement::OverBudget);
                    } else if kept.is_empty() {
                        live[j] = false;
                        traces[j].retired_at = Some(k);
                        traces[j].retirement = Some(Retirement::Exhausted);
                    }
                    next_sets.push(next);
                } else {
                    next_sets.push(Vec::new());
                }
            }
            // retired candidates (including those retired just now) follow center children
            for j in 0..candidates.len() {
                if !live[j] {
                    next_sets[j] = sets[j].iter().map(MultiIndex::center_child).collect();
                }
            }
        }

        levels.push(LevelRecord {
            level: k,
            estimate,
            estimate_inf,
            half_radius: delta,
            eligible: union.len(),
            eligible_mass,
            frozen_mass,
            new_evaluations,
            live: live_at_start,
            active_sizes,
            survivors,
            n_calls: traces.iter().map(|t| t.n_calls).collect(),
            active_sets: recorded_sets,
        });

        if at_cap {
            return Ok(EngineRun { dim, levels, candidates: traces, evaluations, stop: StopReason::DepthLimit });
        }
        if live.iter().all(|l| !l) {
            return Ok(EngineRun { dim, levels, candidates: traces, evaluations, stop: StopReason::Budget });
        }

        // freeze the mass of everything that leaves the pooled set
        let next_union = sorted_union(&next_sets);
        for (p, &v) in union.iter().zip(&values) {
            let kids = p.children();
            let kept = kids.iter().filter(|c| next_union.binary_search(c).is_ok()).count();
            if kept == 0 {
                let m = measure.cell_probability(p);
                frozen.push(MassPoint::frozen(v, m));
                frozen_mass += m;
            } else if kept < kids.len() {
                for c in kids.iter().filter(|c| next_union.binary_search(c).is_err()) {
                    let m = measure.cell_probability(c);
                    frozen.push(MassPoint::frozen(v, m));
                    frozen_mass += m;
                }
            }
        }
        debug_assert!(next_union.iter().all(|c| {
            union.binary_search(&c.parent(1).expect("level ≥ 1")).is_ok()
        }));
        sets = next_sets;
        union = next_union;
    }
    unreachable!("the loop returns at the depth cap")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(x: &[f64]) -> f64 {
        x[0]
    }

    #[test]
    fn band_is_closed() {
        let active = vec![
            MultiIndex::new(1, vec![0]).unwrap(),
            MultiIndex::new(1, vec![1]).unwrap(),
            MultiIndex::new(1, vec![2]).unwrap(),
        ];
        // values 0.17, 0.5, 0.83 around 0.5 with band 1/3
        let vals = [0.17, 0.5, 0.83];
        let kept = band_survivors(&active, |b| vals[b.digits()[0] as usize], 0.5, 1.0, 1.0 / 6.0);
        assert_eq!(kept.len(), 3);
        let edge = band_survivors(&active, |b| [0.0, 0.5, 1.0][b.digits()[0] as usize], 0.5, 0.25, 1.0);
        assert_eq!(edge.len(), 3);
        let tight = band_survivors(&active, |b| vals[b.digits()[0] as usize], 0.5, 0.1, 1.0 / 6.0);
        assert_eq!(tight.len(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = ProductMeasure::uniform(1);
        let c = [Candidate { lipschitz: 1.0, budget: 10 }];
        let o = RunOptions::default();
        assert!(run_engine(&id, &m, 0.0, &c, &o).is_err());
        assert!(run_engine(&id, &m, 0.5, &[], &o).is_err());
        assert!(run_engine(&id, &m, 0.5, &[Candidate { lipschitz: 0.0, budget: 10 }], &o).is_err());
        assert!(run_engine(&id, &m, 0.5, &[Candidate { lipschitz: 1.0, budget: 0 }], &o).is_err());
        let deep = RunOptions { max_level: MAX_LEVEL + 1, ..RunOptions::default() };
        assert!(run_engine(&id, &m, 0.5, &c, &deep).is_err());
    }

    #[test]
    fn identity_median_converges() {
        let m = ProductMeasure::uniform(1);
        let run = run_engine(&id, &m, 0.5, &[Candidate { lipschitz: 1.0, budget: 200 }], &RunOptions::default())
            .unwrap();
        let last = run.last();
        assert!((last.estimate - 0.5).abs() <= last.half_radius);
        for l in &run.levels {
            assert!((l.total_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn depth_cap_stops_run() {
        let m = ProductMeasure::uniform(1);
        let opts = RunOptions { max_level: 3, ..RunOptions::default() };
        let run = run_engine(&id, &m, 0.5, &[Candidate { lipschitz: 1.0, budget: 1_000_000 }], &opts).unwrap();
        assert_eq!(run.stop, StopReason::DepthLimit);
        assert_eq!(run.last().level, 3);
    }
}
