//! Interchangeable estimators behind one trait, looked up by name.

use crate::error::{Error, Result};
use crate::known::run_known_with;
use crate::oracles::{monte_carlo_quantile, TestProblem};
use crate::refine::{RunOptions, StopReason};
use crate::unknown::run_unknown_with;

/// Settings shared by every estimator for one run.
#[derive(Clone, Debug)]
pub struct StrategyContext {
    /// Lipschitz constant handed to estimators that need one.
    pub lipschitz: f64,
    pub seed: u64,
    pub options: RunOptions,
}

impl StrategyContext {
    pub fn for_problem(p: &TestProblem) -> Self {
        Self { lipschitz: p.lipschitz, seed: 0, options: RunOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub estimate: f64,
    /// Deterministic bracket, when the estimator provides one.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub level: Option<u32>,
    pub evaluations: u64,
    /// The run stopped at the depth cap rather than on budget.
    pub saturated: bool,
}

pub trait QuantileStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// Estimates the problem's quantile with at most `budget` calls to `f`.
    fn estimate(&self, problem: &TestProblem, budget: u64, ctx: &StrategyContext) -> Result<Outcome>;
}

pub struct KnownLipschitz;

impl QuantileStrategy for KnownLipschitz {
    fn name(&self) -> &'static str {
        "known"
    }

    fn description(&self) -> &'static str {
        "adaptive ternary refinement with a known Lipschitz constant; returns a bracket"
    }

    fn estimate(&self, p: &TestProblem, budget: u64, ctx: &StrategyContext) -> Result<Outcome> {
        let run = run_known_with(p.f(), ctx.lipschitz, &p.measure, p.alpha, budget, &ctx.options)?;
        let b = run.bracket;
        Ok(Outcome {
            estimate: b.estimate,
            lower: Some(b.lower),
            upper: Some(b.upper),
            level: Some(b.level),
            evaluations: b.evaluations,
            saturated: run.stop == StopReason::DepthLimit,
        })
    }
}

pub struct UnknownLipschitz;

impl QuantileStrategy for UnknownLipschitz {
    fn name(&self) -> &'static str {
        "unknown"
    }

    fn description(&self) -> &'static str {
        "adaptive refinement over Lipschitz candidates 3^j sharing the budget; point estimate"
    }

    fn estimate(&self, p: &TestProblem, budget: u64, ctx: &StrategyContext) -> Result<Outcome> {
        let run = run_unknown_with(p.f(), &p.measure, p.alpha, budget, &ctx.options)?;
        Ok(Outcome {
            estimate: run.estimate,
            lower: None,
            upper: None,
            level: Some(run.level),
            evaluations: run.evaluations,
            saturated: run.stop == StopReason::DepthLimit,
        })
    }
}

pub struct MonteCarlo;

impl QuantileStrategy for MonteCarlo {
    fn name(&self) -> &'static str {
        "monte_carlo"
    }

    fn description(&self) -> &'static str {
        "empirical quantile of `budget` inverse-CDF samples"
    }

    fn estimate(&self, p: &TestProblem, budget: u64, ctx: &StrategyContext) -> Result<Outcome> {
        let mc = monte_carlo_quantile(p, budget as usize, ctx.seed)?;
        Ok(Outcome {
            estimate: mc.estimate,
            lower: None,
            upper: None,
            level: None,
            evaluations: budget,
            saturated: false,
        })
    }
}

/// Estimators in registration order.
pub struct StrategyRegistry {
    entries: Vec<Box<dyn QuantileStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(KnownLipschitz)).expect("distinct names");
        r.register(Box::new(UnknownLipschitz)).expect("distinct names");
        r.register(Box::new(MonteCarlo)).expect("distinct names");
        r
    }

    pub fn register(&mut self, s: Box<dyn QuantileStrategy>) -> Result<()> {
        if self.entries.iter().any(|e| e.name() == s.name()) {
            return Err(Error::InvalidArgument(format!("strategy `{}` is already registered", s.name())));
        }
        self.entries.push(s);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&dyn QuantileStrategy> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownName { kind: "algorithm", name: name.into() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
