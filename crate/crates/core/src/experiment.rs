//! Budget sweeps, CSV output, slope fitting and adversary tables.
//!
//! Configuration is a plain `key = value` file; `#` starts a comment.
//!
//! ```text
//! problem  = paper_d1
//! algo     = known
//! budgets  = 10:500:10
//! ```
//!
//! Custom problems set `problem = custom` together with `dim`, `function`
//! (an expression in `x1 … xd`), `measure` and `alpha`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use rayon::prelude::*;

use crate::adversary::{
    build_adversary_d1, build_adversary_d2, default_boost, place_queries, verify_separation, QueryPlacement,
    SeparationReport, D1_BOOST, D1_RHO,
};
use crate::bounds::{known_bound, unknown_bound, ProblemConstants};
use crate::error::{Error, Result};
use crate::measure::{Marginal, ProductMeasure};
use crate::oracles::{
    brute_force_quantile, builtin_problem, estimate_level_set_m, lipschitz_random_pairs, quantile_1d, TestProblem,
    BUILTIN_PROBLEMS,
};
use crate::refine::{RunOptions, SharedObjective, DEFAULT_MAX_LEVEL};
use crate::strategy::{StrategyContext, StrategyRegistry};

/// Factor applied to estimated `(L, M)` before they enter a bound.
pub const CONSTANT_INFLATION: f64 = 1.5;

/// Factor applied to an estimated Lipschitz constant for custom problems.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

pub const CSV_HEADER: [&str; 9] = ["n", "estimate", "lower", "upper", "level", "evals", "true_q", "abs_error", "bound"];

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Builtin(String),
    Custom(CustomProblem),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CustomProblem {
    pub dim: usize,
    pub function: String,
    /// One entry per axis, or a single entry for all axes.
    pub measure: Vec<MarginalSpec>,
    pub true_q: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarginalSpec {
    Uniform,
    TruncatedNormal { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithm: String,
    /// Overrides the problem's level when set.
    pub alpha: Option<f64>,
    pub budgets: Vec<u64>,
    pub lipschitz: Option<f64>,
    /// Overrides the estimated level-set constant in the bound column.
    pub level_set: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Oracle grid resolution per axis.
    pub resolution: Option<usize>,
    pub max_level: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::Builtin("paper_d1".into()),
            algorithm: "known".into(),
            alpha: None,
            budgets: Vec::new(),
            lipschitz: None,
            level_set: None,
            out: None,
            seed: 0,
            resolution: None,
            max_level: DEFAULT_MAX_LEVEL,
        }
    }
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| config_err(line, format!("`{key}` expects a number, got `{v}`")))
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| config_err(line, format!("`{key}` expects a non-negative integer, got `{v}`")))
}

/// `a,b,c` or `start:stop:step` (stop inclusive); must be strictly increasing.
pub fn parse_budgets(v: &str) -> std::result::Result<Vec<u64>, String> {
    let v = v.trim();
    let budgets: Vec<u64> = if v.contains(':') {
        let parts: Vec<&str> = v.split(':').map(str::trim).collect();
        let [a, b, s] = parts[..] else {
            return Err(format!("range `{v}` must be start:stop:step"));
        };
        let num = |t: &str| t.parse::<u64>().map_err(|_| format!("`{t}` is not a non-negative integer"));
        let (a, b, s) = (num(a)?, num(b)?, num(s)?);
        if s == 0 {
            return Err("range step must be positive".into());
        }
        (a..=b).step_by(s as usize).collect()
    } else if v.is_empty() {
        Vec::new()
    } else {
        v.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(|_| format!("`{}` is not a non-negative integer", t.trim())))
            .collect::<std::result::Result<_, _>>()?
    };
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err("budgets must be strictly increasing".into());
    }
    Ok(budgets)
}

fn parse_marginal(s: &str) -> std::result::Result<MarginalSpec, String> {
    let s = s.trim();
    if s == "uniform" {
        return Ok(MarginalSpec::Uniform);
    }
    let inner = s
        .strip_prefix("truncnorm(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("unknown marginal `{s}` (expected uniform or truncnorm(mu,sigma))"))?;
    let nums: Vec<f64> = inner
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", t.trim())))
        .collect::<std::result::Result<_, _>>()?;
    match nums[..] {
        [mu, sigma] if sigma > 0.0 => Ok(MarginalSpec::TruncatedNormal { mu, sigma }),
        [_, _] => Err("truncnorm sigma must be positive".into()),
        _ => Err(format!("truncnorm takes two parameters, got `{inner}`")),
    }
}

/// Semicolon-separated marginals, e.g. `uniform; truncnorm(0.2,0.2)`.
pub fn parse_measure(v: &str) -> std::result::Result<Vec<MarginalSpec>, String> {
    v.split(';').map(parse_marginal).collect()
}

#[derive(Default)]
struct CustomFields {
    dim: Option<(usize, usize)>,
    function: Option<(String, usize)>,
    measure: Option<(Vec<MarginalSpec>, usize)>,
    true_q: Option<f64>,
}

/// Accumulates `key = value` pairs; `line` is 0 for command-line overrides.
#[derive(Default)]
pub struct ConfigBuilder {
    cfg: ExperimentConfig,
    problem: Option<(String, usize)>,
    custom: CustomFields,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<&mut Self> {
        let v = value.trim();
        let c = &mut self.cfg;
        match key.trim() {
            "problem" => self.problem = Some((v.to_string(), line)),
            "algo" | "algorithm" => c.algorithm = v.to_string(),
            "alpha" => {
                let a = parse_f64(line, "alpha", v)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(config_err(line, format!("alpha must lie in (0,1), got {a}")));
                }
                c.alpha = Some(a);
            }
            "budgets" => c.budgets = parse_budgets(v).map_err(|m| config_err(line, m))?,
            "lipschitz" => {
                let l = parse_f64(line, "lipschitz", v)?;
                if l <= 0.0 {
                    return Err(config_err(line, "lipschitz must be positive"));
                }
                c.lipschitz = Some(l);
            }
            "level_set" => {
                let m = parse_f64(line, "level_set", v)?;
                if m <= 0.0 {
                    return Err(config_err(line, "level_set must be positive"));
                }
                c.level_set = Some(m);
            }
            "out" => c.out = Some(PathBuf::from(v)),
            "seed" => c.seed = parse_int(line, "seed", v)?,
            "resolution" => c.resolution = Some(parse_int(line, "resolution", v)?),
            "max_level" => c.max_level = parse_int(line, "max_level", v)?,
            "dim" => self.custom.dim = Some((parse_int(line, "dim", v)?, line)),
            "function" => self.custom.function = Some((v.to_string(), line)),
            "measure" => self.custom.measure = Some((parse_measure(v).map_err(|m| config_err(line, m))?, line)),
            "true_q" => self.custom.true_q = Some(parse_f64(line, "true_q", v)?),
            other => return Err(config_err(line, format!("unknown key `{other}`"))),
        }
        Ok(self)
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn read_str(&mut self, text: &str) -> Result<&mut Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| config_err(i + 1, format!("expected key = value, got `{line}`")))?;
            self.set(k, v, i + 1)?;
        }
        Ok(self)
    }

    pub fn read_file(&mut self, path: &Path) -> Result<&mut Self> {
        let text = std::fs::read_to_string(path)?;
        self.read_str(&text)
    }

    pub fn build(self) -> Result<ExperimentConfig> {
        let mut cfg = self.cfg;
        let (name, line) = self.problem.unwrap_or_else(|| ("paper_d1".into(), 0));
        cfg.problem = if name == "custom" {
            let (dim, dim_line) = self.custom.dim.ok_or_else(|| config_err(line, "custom problem needs `dim`"))?;
            if dim == 0 {
                return Err(config_err(dim_line, "dim must be at least 1"));
            }
            let (function, _) =
                self.custom.function.ok_or_else(|| config_err(line, "custom problem needs `function`"))?;
            let (measure, m_line) = self.custom.measure.unwrap_or((vec![MarginalSpec::Uniform], 0));
            if measure.len() != 1 && measure.len() != dim {
                return Err(config_err(m_line, format!("measure lists {} axes for dim {dim}", measure.len())));
            }
            if cfg.alpha.is_none() {
                return Err(config_err(line, "custom problem needs `alpha`"));
            }
            ProblemSpec::Custom(CustomProblem { dim, function, measure, true_q: self.custom.true_q })
        } else {
            if !BUILTIN_PROBLEMS.contains(&name.as_str()) {
                return Err(config_err(line, format!("unknown problem `{name}`; expected one of {BUILTIN_PROBLEMS:?} or custom")));
            }
            ProblemSpec::Builtin(name)
        };
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut b = ConfigBuilder::new();
        b.read_str(text)?;
        b.build()
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { max_level: self.max_level, ..RunOptions::default() }
    }

    /// Builds the problem, applying the `alpha` and `lipschitz` overrides.
    pub fn problem(&self) -> Result<TestProblem> {
        let mut p = match &self.problem {
            ProblemSpec::Builtin(name) => {
                let p = builtin_problem(name)?;
                match self.alpha {
                    Some(a) => p.with_alpha(a)?,
                    None => p,
                }
            }
            ProblemSpec::Custom(c) => custom_problem(c, self.alpha.unwrap_or(0.5), self.lipschitz, self.seed)?,
        };
        if let Some(l) = self.lipschitz {
            p.lipschitz = l;
        }
        Ok(p)
    }
}

/// Compiles an expression in `x1 … x_dim` into an objective.
pub fn compile_function(expr: &str, dim: usize) -> Result<SharedObjective> {
    let tree: Node<DefaultNumericTypes> =
        evalexpr::build_operator_tree(expr).map_err(|e| Error::Expression(e.to_string()))?;
    let names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    for id in tree.iter_variable_identifiers() {
        if !names.iter().any(|n| n == id) {
            return Err(Error::Expression(format!("unknown variable `{id}` (expected x1..x{dim})")));
        }
    }
    let eval = move |x: &[f64]| -> std::result::Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (n, &xi) in names.iter().zip(x) {
            ctx.set_value(n.clone(), Value::Float(xi)).map_err(|e| e.to_string())?;
        }
        tree.eval_number_with_context(&ctx).map_err(|e| e.to_string())
    };
    // surface type errors now rather than inside a run
    let probe = eval(&vec![0.5; dim]).map_err(Error::Expression)?;
    if !probe.is_finite() {
        return Err(Error::Expression(format!("`{expr}` is not finite at the cube center")));
    }
    Ok(Arc::new(move |x: &[f64]| eval(x).unwrap_or(f64::NAN)))
}

fn custom_problem(c: &CustomProblem, alpha: f64, lipschitz: Option<f64>, seed: u64) -> Result<TestProblem> {
    let objective = compile_function(&c.function, c.dim)?;
    let marginal = |s: &MarginalSpec| match *s {
        MarginalSpec::Uniform => Ok(Marginal::uniform()),
        MarginalSpec::TruncatedNormal { mu, sigma } => Marginal::truncated_normal(mu, sigma),
    };
    let marginals = if c.measure.len() == 1 {
        vec![marginal(&c.measure[0])?; c.dim]
    } else {
        c.measure.iter().map(marginal).collect::<Result<_>>()?
    };
    let lipschitz = match lipschitz {
        Some(l) => l,
        None => LIPSCHITZ_SAFETY * lipschitz_random_pairs(objective.as_ref(), c.dim, 200_000, seed).max(1e-12),
    };
    Ok(TestProblem {
        name: "custom".into(),
        dim: c.dim,
        objective,
        lipschitz,
        measure: ProductMeasure::new(marginals)?,
        alpha,
        true_quantile: c.true_q,
    })
}

/// Closed form if known, else the crossing oracle (`d = 1`) or the grid
/// oracle at `resolution` (`d = 2`). `None` for `d > 2`.
pub fn reference_quantile(p: &TestProblem, resolution: Option<usize>) -> Result<Option<f64>> {
    if let Some(q) = p.true_quantile {
        return Ok(Some(q));
    }
    match p.dim {
        1 => quantile_1d(p.f(), &p.measure.marginals()[0], p.alpha, resolution.unwrap_or(20_000).max(1000)).map(Some),
        2 => brute_force_quantile(p, resolution.unwrap_or(2000)).map(Some),
        _ => Ok(None),
    }
}

/// Grid resolution used for the level-set estimate.
pub fn level_set_resolution(dim: usize) -> usize {
    if dim == 1 {
        1_000_000
    } else {
        2000
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResultRow {
    pub n: u64,
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub level: Option<u32>,
    pub evals: u64,
    pub true_q: Option<f64>,
    pub abs_error: Option<f64>,
    pub bound: Option<f64>,
    /// Stopped at the depth cap; excluded from slope fits.
    pub saturated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// `ln err` against `N`.
    Semilog,
    /// `ln err` against `ln N`.
    Loglog,
}

impl FitMode {
    pub fn for_dim(dim: usize) -> Self {
        if dim == 1 {
            FitMode::Semilog
        } else {
            FitMode::Loglog
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub mode: FitMode,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
    pub excluded_zero: usize,
    pub excluded_saturated: usize,
}

impl SlopeFit {
    /// `exp(slope)`, the per-call decay ratio of a semilog fit.
    pub fn rho(&self) -> Option<f64> {
        (self.mode == FitMode::Semilog).then(|| self.slope.exp())
    }
}

/// Ordinary least squares of `ln err` on `N` or `ln N`.
pub fn fit_slope(rows: &[ResultRow], mode: FitMode) -> Result<SlopeFit> {
    let mut excluded_zero = 0;
    let mut excluded_saturated = 0;
    let mut pts = Vec::new();
    for r in rows {
        let Some(e) = r.abs_error else { continue };
        if r.saturated {
            excluded_saturated += 1;
        } else if e <= 0.0 {
            excluded_zero += 1;
        } else {
            let x = match mode {
                FitMode::Semilog => r.n as f64,
                FitMode::Loglog => (r.n as f64).ln(),
            };
            pts.push((x, e.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::TooFewRows { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs at least two distinct budgets".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit { mode, slope, intercept, r2, used: pts.len(), excluded_zero, excluded_saturated })
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub problem: String,
    pub algorithm: String,
    pub dim: usize,
    pub true_q: Option<f64>,
    /// Inflated constants behind the bound column.
    pub constants: Option<ProblemConstants>,
    pub rows: Vec<ResultRow>,
    pub fit: std::result::Result<SlopeFit, String>,
}

/// Runs the configured estimator once per budget, from scratch each time.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(cfg, &StrategyRegistry::with_builtins())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, registry: &StrategyRegistry) -> Result<ExperimentReport> {
    let strategy = registry.get(&cfg.algorithm)?;
    let problem = cfg.problem()?;
    let true_q = reference_quantile(&problem, cfg.resolution)?;

    let constants = match (cfg.level_set, true_q) {
        _ if problem.dim > 2 && cfg.level_set.is_none() => None,
        (Some(m), _) => Some(ProblemConstants::new(problem.dim, problem.lipschitz, m, problem.alpha)?),
        (None, Some(q)) => {
            let est = estimate_level_set_m(problem.f(), problem.dim, q, level_set_resolution(problem.dim))?;
            (!est.violated && est.m > 0.0)
                .then(|| ProblemConstants::new(problem.dim, problem.lipschitz, est.m, problem.alpha))
                .transpose()?
        }
        (None, None) => None,
    }
    .map(|c| c.inflated(CONSTANT_INFLATION));

    let ctx = StrategyContext { lipschitz: problem.lipschitz, seed: cfg.seed, options: cfg.run_options() };
    let rows = cfg
        .budgets
        .par_iter()
        .map(|&n| {
            let o = strategy.estimate(&problem, n, &ctx)?;
            let bound = constants.and_then(|c| match strategy.name() {
                "known" => known_bound(&c, n).ok(),
                "unknown" => unknown_bound(&c, n).ok(),
                _ => None,
            });
            Ok(ResultRow {
                n,
                estimate: o.estimate,
                lower: o.lower,
                upper: o.upper,
                level: o.level,
                evals: o.evaluations,
                true_q,
                abs_error: true_q.map(|q| (o.estimate - q).abs()),
                bound,
                saturated: o.saturated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_slope(&rows, FitMode::for_dim(problem.dim)).map_err(|e| e.to_string());
    Ok(ExperimentReport {
        problem: problem.name.clone(),
        algorithm: strategy.name().to_string(),
        dim: problem.dim,
        true_q,
        constants,
        rows,
        fit,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes rows under [`CSV_HEADER`]; absent fields are empty.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.estimate.to_string(),
            opt(r.lower),
            opt(r.upper),
            opt(r.level),
            r.evals.to_string(),
            opt(r.true_q),
            opt(r.abs_error),
            opt(r.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default oracle resolution for adversary checks.
pub fn adversary_resolution(dim: usize) -> usize {
    if dim == 1 {
        1_000_000
    } else {
        3000
    }
}

/// Builds and verifies the adversary pair for each `N`, in parallel.
pub fn adversary_report(
    dim: usize,
    ns: &[usize],
    placement: QueryPlacement,
    resolution: usize,
) -> Result<Vec<SeparationReport>> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidArgument(format!("adversary supports d ∈ {{1,2}}, got {dim}")));
    }
    ns.par_iter()
        .map(|&n| {
            let queries = place_queries(n, dim, placement);
            let adv = if dim == 1 {
                build_adversary_d1(queries, D1_RHO, D1_BOOST)?
            } else {
                build_adversary_d2(queries, default_boost(2))?
            };
            verify_separation(&adv, resolution)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSummary {
    pub problem: String,
    pub dim: usize,
    pub alpha: f64,
    pub reference: Option<f64>,
    pub closed_form: Option<f64>,
    pub lipschitz: f64,
    pub lipschitz_sampled: f64,
    pub level_set: Option<f64>,
}

/// Reference quantile and constant estimates for a problem.
pub fn oracle_summary(cfg: &ExperimentConfig) -> Result<OracleSummary> {
    let p = cfg.problem()?;
    let reference = reference_quantile(&p, cfg.resolution)?;
    let level_set = match reference {
        Some(q) if p.dim <= 2 => Some(estimate_level_set_m(p.f(), p.dim, q, level_set_resolution(p.dim))?.m),
        _ => None,
    };
    Ok(OracleSummary {
        problem: p.name.clone(),
        dim: p.dim,
        alpha: p.alpha,
        reference,
        closed_form: p.true_quantile,
        lipschitz: p.lipschitz,
        lipschitz_sampled: lipschitz_random_pairs(p.f(), p.dim, 200_000, cfg.seed),
        level_set,
    })
}
