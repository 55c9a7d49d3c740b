//! Quantile estimation without a known Lipschitz constant.
//!
//! Candidates `L_j = 3^j` share the budget through
//! `N_max(j, N) = ⌊6N / (π²(j+1)²)⌋` and are refined jointly; see
//! [`crate::refine`] for the pooled level step.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::half_radius;
use crate::measure::ProductMeasure;
use crate::refine::{run_engine, Candidate, EngineRun, Objective, Retirement, RunOptions, StopReason};

/// Smallest budget for which candidate `j = 0` receives a call.
pub const MIN_BUDGET: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateSchedule {
    pub j: u32,
    pub lipschitz: f64,
    pub budget: u64,
}

/// `⌊6N / (π²(j+1)²)⌋`.
pub fn n_max(j: u32, budget: u64) -> u64 {
    let jj = (j as f64 + 1.0) * (j as f64 + 1.0);
    (6.0 * budget as f64 / (PI * PI * jj)).floor() as u64
}

/// Largest `j` with `N_max(j, N) ≥ 1`, by enumeration.
pub fn j_max(budget: u64) -> Result<u32> {
    if budget < MIN_BUDGET {
        return Err(Error::InvalidArgument(format!(
            "the unknown-constant estimator needs a budget of at least {MIN_BUDGET}, got {budget}"
        )));
    }
    let mut j = 0;
    while n_max(j + 1, budget) >= 1 {
        j += 1;
    }
    Ok(j)
}

/// `⌊√(6N)/π⌋ − 1`, kept for comparison with [`j_max`].
pub fn j_max_closed_form(budget: u64) -> i64 {
    ((6.0 * budget as f64).sqrt() / PI).floor() as i64 - 1
}

/// Candidates `j = 0..=j_max(N)` with their budgets.
pub fn schedule(budget: u64) -> Result<Vec<CandidateSchedule>> {
    Ok((0..=j_max(budget)?)
        .map(|j| CandidateSchedule { j, lipschitz: 3f64.powi(j as i32), budget: n_max(j, budget) })
        .collect())
}

#[derive(Clone, Debug)]
pub struct UnknownRun {
    pub estimate: f64,
    pub estimate_inf: f64,
    pub level: u32,
    pub evaluations: u64,
    pub schedule: Vec<CandidateSchedule>,
    /// Level whose charge retired each candidate (`None` if the depth cap came first).
    pub retirement_levels: Vec<Option<u32>>,
    pub retirement_kinds: Vec<Option<Retirement>>,
    pub j_max_closed_form: i64,
    pub stop: StopReason,
    pub trace: EngineRun,
}

impl UnknownRun {
    pub fn j_max(&self) -> u32 {
        self.schedule.last().map_or(0, |c| c.j)
    }

    /// Whether enumeration and the closed form disagree for this budget.
    pub fn j_max_diverges(&self) -> bool {
        self.j_max() as i64 != self.j_max_closed_form
    }
}

pub fn run_unknown(f: Objective<'_>, measure: &ProductMeasure, alpha: f64, budget: u64) -> Result<UnknownRun> {
    run_unknown_with(f, measure, alpha, budget, &RunOptions::default())
}

pub fn run_unknown_with(
    f: Objective<'_>,
    measure: &ProductMeasure,
    alpha: f64,
    budget: u64,
    opts: &RunOptions,
) -> Result<UnknownRun> {
    let schedule = schedule(budget)?;
    let candidates: Vec<Candidate> =
        schedule.iter().map(|c| Candidate { lipschitz: c.lipschitz, budget: c.budget }).collect();
    let trace = run_engine(f, measure, alpha, &candidates, opts)?;
    let last = trace.last();
    Ok(UnknownRun {
        estimate: last.estimate,
        estimate_inf: last.estimate_inf,
        level: last.level,
        evaluations: trace.evaluations,
        retirement_levels: trace.candidates.iter().map(|c| c.retired_at).collect(),
        retirement_kinds: trace.candidates.iter().map(|c| c.retirement).collect(),
        j_max_closed_form: j_max_closed_form(budget),
        stop: trace.stop,
        schedule,
        trace,
    })
}

/// Final level of a standalone known-constant run with `L = 3^j` and budget
/// `N_max(j, N)`, for every scheduled `j`. Compare with
/// [`UnknownRun::retirement_levels`], the levels at which the pooled run
/// retired each candidate.
pub fn standalone_levels(
    f: Objective<'_>,
    measure: &ProductMeasure,
    alpha: f64,
    budget: u64,
    opts: &RunOptions,
) -> Result<Vec<u32>> {
    schedule(budget)?
        .iter()
        .map(|c| {
            let run = run_engine(f, measure, alpha, &[Candidate { lipschitz: c.lipschitz, budget: c.budget }], opts)?;
            Ok(run.last().level)
        })
        .collect()
}

/// `min{ j : 3^j ≥ L }`.
pub fn j_star(lipschitz: f64) -> u32 {
    let mut j = 0;
    while 3f64.powi(j as i32) < lipschitz {
        j += 1;
    }
    j
}

/// Checks `|estimate − q| ≤ 4·3^{j*}·δ^{min(k, ℓ(j*))}`, with `ℓ(j*)` the
/// level at which candidate `j*` retired. False when `j*` is not scheduled.
pub fn unknown_error_bound_check(run: &UnknownRun, true_q: f64, lipschitz_true: f64) -> bool {
    let js = j_star(lipschitz_true);
    let Some(pos) = run.schedule.iter().position(|c| c.j == js) else {
        return false;
    };
    let level = run.retirement_levels[pos].map_or(run.level, |l| l.min(run.level));
    let bound = 4.0 * 3f64.powi(js as i32) * half_radius(level, run.trace.dim);
    (run.estimate - true_q).abs() <= bound
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_max_examples() {
        assert_eq!(j_max(2).unwrap(), 0);
        assert_eq!(j_max(100).unwrap(), 6);
        assert_eq!(j_max(1000).unwrap(), 23);
        assert!(j_max(1).is_err());
    }

    #[test]
    fn budgets_sum_below_total() {
        for n in [2u64, 3, 10, 100, 1000, 12345] {
            let s = schedule(n).unwrap();
            assert!(s.iter().map(|c| c.budget).sum::<u64>() <= n);
            assert!(s.iter().all(|c| c.budget >= 1));
            assert_eq!(s[0].lipschitz, 1.0);
        }
    }

    #[test]
    fn closed_form_is_within_one() {
        for n in 2..5000 {
            let e = j_max(n).unwrap() as i64;
            assert!((e - j_max_closed_form(n)).abs() <= 1, "n={n}");
        }
    }

    #[test]
    fn j_star_values() {
        assert_eq!(j_star(1.0), 0);
        assert_eq!(j_star(1.61), 1);
        assert_eq!(j_star(3.0), 1);
        assert_eq!(j_star(2f64.sqrt()), 1);
        assert_eq!(j_star(9.5), 3);
    }

    #[test]
    fn retirement_matches_standalone_runs_above_the_true_constant() {
        let m = ProductMeasure::uniform(1);
        let f = |x: &[f64]| (3.0 * x[0]).sin() + 0.5 * x[0];
        let opts = RunOptions::default();
        let run = run_unknown_with(&f, &m, 0.8, 500, &opts).unwrap();
        let solo = standalone_levels(&f, &m, 0.8, 500, &opts).unwrap();
        // f is 3.5-Lipschitz, so j ≥ 2 follows its standalone trajectory
        for (j, (r, s)) in run.retirement_levels.iter().zip(&solo).enumerate().skip(2) {
            assert_eq!(r.unwrap_or(run.level), *s, "j={j}");
        }
    }

    #[test]
    fn constant_function() {
        let u = ProductMeasure::uniform(1);
        let f = |_: &[f64]| 0.7;
        let run = run_unknown(&f, &u, 0.9, 300).unwrap();
        assert!(run.trace.levels.iter().all(|l| l.estimate == 0.7));
        assert!(unknown_error_bound_check(&run, 0.7, 1.0));
    }
}
