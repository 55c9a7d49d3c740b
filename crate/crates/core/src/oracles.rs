//! Test problems, reference quantiles, constant estimators and a Monte Carlo
//! baseline. Nothing here uses the refinement engine.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{Marginal, ProductMeasure};
use crate::refine::Objective;

pub use crate::refine::SharedObjective;

/// A function, a law and a level, with whatever is known about the answer.
#[derive(Clone)]
pub struct TestProblem {
    pub name: String,
    pub dim: usize,
    pub objective: SharedObjective,
    /// A valid Lipschitz constant (Euclidean norm).
    pub lipschitz: f64,
    pub measure: ProductMeasure,
    pub alpha: f64,
    /// Closed-form quantile when one exists.
    pub true_quantile: Option<f64>,
}

impl std::fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("alpha", &self.alpha)
            .field("true_quantile", &self.true_quantile)
            .finish_non_exhaustive()
    }
}

impl TestProblem {
    pub fn f(&self) -> Objective<'_> {
        self.objective.as_ref()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
        }
        self.true_quantile = match self.name.as_str() {
            "paper_d2" => Some(irwin_hall2_quantile(alpha)),
            "linear_d1" => Some(alpha),
            _ => None,
        };
        self.alpha = alpha;
        Ok(self)
    }

    /// Closed-form quantile if known, otherwise the level-crossing oracle
    /// (`d = 1`) or the brute-force grid at resolution 2000 (`d = 2`).
    pub fn reference_quantile(&self) -> Result<f64> {
        if let Some(q) = self.true_quantile {
            return Ok(q);
        }
        if self.dim == 1 {
            quantile_1d(self.f(), &self.measure.marginals()[0], self.alpha, 20_000)
        } else {
            brute_force_quantile(self, 2000)
        }
    }
}

/// `0.8x − 0.3 + exp(−11.534·x^1.95) + exp(−2(x − 0.9)²)`.
pub fn paper_f1(x: f64) -> f64 {
    0.8 * x - 0.3 + (-11.534 * x.powf(1.95)).exp() + (-2.0 * (x - 0.9) * (x - 0.9)).exp()
}

/// `2 − √(2(1 − α))`, the upper quantile of the sum of two uniforms (α ≥ 1/2).
pub fn irwin_hall2_quantile(alpha: f64) -> f64 {
    if alpha >= 0.5 {
        2.0 - (2.0 * (1.0 - alpha)).sqrt()
    } else {
        (2.0 * alpha).sqrt()
    }
}

/// One-dimensional problem under a truncated normal(1/5, 1/25) law at α = 0.999.
pub fn paper_d1() -> TestProblem {
    TestProblem {
        name: "paper_d1".into(),
        dim: 1,
        objective: Arc::new(|x: &[f64]| paper_f1(x[0])),
        lipschitz: 1.61,
        measure: ProductMeasure::new(vec![Marginal::truncated_normal(0.2, 0.2).expect("valid parameters")])
            .expect("valid marginal"),
        alpha: 0.999,
        true_quantile: None,
    }
}

/// `x₁ + x₂` under the uniform law on the square at α = 0.999.
pub fn paper_d2() -> TestProblem {
    TestProblem {
        name: "paper_d2".into(),
        dim: 2,
        objective: Arc::new(|x: &[f64]| x[0] + x[1]),
        lipschitz: 2f64.sqrt(),
        measure: ProductMeasure::uniform(2),
        alpha: 0.999,
        true_quantile: Some(irwin_hall2_quantile(0.999)),
    }
}

/// `x` under the uniform law on `[0,1]` at α = 0.5.
pub fn linear_d1() -> TestProblem {
    TestProblem {
        name: "linear_d1".into(),
        dim: 1,
        objective: Arc::new(|x: &[f64]| x[0]),
        lipschitz: 1.0,
        measure: ProductMeasure::uniform(1),
        alpha: 0.5,
        true_quantile: Some(0.5),
    }
}

pub const BUILTIN_PROBLEMS: [&str; 3] = ["paper_d1", "paper_d2", "linear_d1"];

pub fn builtin_problem(name: &str) -> Result<TestProblem> {
    match name {
        "paper_d1" => Ok(paper_d1()),
        "paper_d2" => Ok(paper_d2()),
        "linear_d1" => Ok(linear_d1()),
        _ => Err(Error::UnknownName { kind: "problem", name: name.into() }),
    }
}

/// Largest grid the brute-force oracle accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 20_000_000;

/// Smallest midpoint value whose cumulative cell mass reaches `α`, on a
/// `resolution^d` grid. Accurate to about `L·√d / resolution`.
pub fn brute_force_quantile(p: &TestProblem, resolution: usize) -> Result<f64> {
    brute_force_quantile_of(p.f(), &p.measure, p.alpha, resolution)
}

pub fn brute_force_quantile_of(
    f: Objective<'_>,
    measure: &ProductMeasure,
    alpha: f64,
    resolution: usize,
) -> Result<f64> {
    let dim = measure.dim();
    if dim > 2 {
        return Err(Error::InvalidArgument(format!("brute-force oracle supports d ≤ 2, got {dim}")));
    }
    if resolution < 1000 {
        return Err(Error::InvalidArgument(format!("resolution must be at least 1000, got {resolution}")));
    }
    let cells = (resolution as u64).saturating_pow(dim as u32);
    if cells > BRUTE_FORCE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "{cells} grid cells exceed the brute-force limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let n = resolution;
    let h = 1.0 / n as f64;
    let axis_mass: Vec<Vec<f64>> = measure
        .marginals()
        .iter()
        .map(|m| (0..n).map(|i| m.interval_mass(i as f64 * h, (i + 1) as f64 * h)).collect())
        .collect();
    let mid = |i: usize| (i as f64 + 0.5) * h;
    let mut pts: Vec<(f64, f64)> = (0..cells as usize)
        .into_par_iter()
        .map(|idx| {
            if dim == 1 {
                (f(&[mid(idx)]), axis_mass[0][idx])
            } else {
                let (i, j) = (idx / n, idx % n);
                (f(&[mid(i), mid(j)]), axis_mass[0][i] * axis_mass[1][j])
            }
        })
        .collect();
    // stable sort: equal values keep grid order, so the scan is deterministic
    pts.par_sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let target = alpha * total;
    let mut acc = 0.0;
    for (v, m) in &pts {
        acc += m;
        if acc >= target {
            return Ok(*v);
        }
    }
    Ok(pts.last().expect("non-empty grid").0)
}

/// `P(f(X) > l)` for a one-dimensional `X`, with the crossings of `f = l`
/// located by bisection between the points of `grid`.
fn superlevel_mass(f: Objective<'_>, marginal: &Marginal, grid: &[f64], values: &[f64], l: f64) -> f64 {
    let crossing = |mut a: f64, mut b: f64| {
        // f(a) and f(b) lie on different sides of l
        let above_a = f(&[a]) > l;
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                return m;
            }
            if (f(&[m]) > l) == above_a {
                a = m;
            } else {
                b = m;
            }
        }
    };
    let mut mass = 0.0;
    let mut start: Option<f64> = if values[0] > l { Some(grid[0]) } else { None };
    for i in 1..grid.len() {
        let (prev, cur) = (values[i - 1] > l, values[i] > l);
        if prev != cur {
            let x = crossing(grid[i - 1], grid[i]);
            if cur {
                start = Some(x);
            } else if let Some(s) = start.take() {
                mass += marginal.interval_mass(s, x);
            }
        }
    }
    if let Some(s) = start {
        mass += marginal.interval_mass(s, *grid.last().expect("non-empty grid"));
    }
    mass
}

/// α-quantile of `f(X)` for one-dimensional `X`, to near machine precision.
///
/// Assumes `f` crosses every level at most once between consecutive points of
/// a uniform grid with `grid_points` points, which holds for smooth `f` once
/// the grid is fine enough.
pub fn quantile_1d(f: Objective<'_>, marginal: &Marginal, alpha: f64, grid_points: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("the crossing oracle needs at least two grid points".into()));
    }
    let grid: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(&[x])).collect();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let tail = 1.0 - alpha;
    // widen slightly: the true extrema may sit between grid points
    let pad = 1e-6 * (hi - lo).max(1.0);
    lo -= pad;
    hi += pad;
    // invariant: P(f > lo) > 1 − α ≥ P(f > hi)
    loop {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            return Ok(hi);
        }
        if superlevel_mass(f, marginal, &grid, &values, m) <= tail {
            hi = m;
        } else {
            lo = m;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetEstimate {
    /// Largest ratio `vol{|f − q| ≤ δ} / δ` over the δ grid.
    pub m: f64,
    pub resolution: usize,
    /// `(δ, volume / δ)` for every δ examined.
    pub ratios: Vec<(f64, f64)>,
    /// The band volume does not shrink with δ, so no finite `M` exists.
    pub violated: bool,
}

/// Estimates the level-set constant `M` on a midpoint grid.
///
/// δ runs over 60 log-spaced values from 1e-4 up to the largest deviation
/// `|f − q|` seen on the grid; larger δ cannot increase the ratio.
pub fn estimate_level_set_m(f: Objective<'_>, dim: usize, q: f64, resolution: usize) -> Result<LevelSetEstimate> {
    if dim == 0 || dim > 2 {
        return Err(Error::InvalidArgument(format!("level-set estimate supports d ∈ {{1,2}}, got {dim}")));
    }
    let n = resolution;
    let cells = n.pow(dim as u32);
    let mid = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut dev: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|idx| {
            let v = if dim == 1 { f(&[mid(idx)]) } else { f(&[mid(idx / n), mid(idx % n)]) };
            (v - q).abs()
        })
        .collect();
    dev.par_sort_by(f64::total_cmp);
    let vol = |d: f64| dev.partition_point(|&x| x <= d) as f64 / cells as f64;
    let far = dev.last().copied().unwrap_or(0.0).max(1e-4);
    let steps = 60;
    let ratios: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let d = 1e-4 * (far / 1e-4).powf(i as f64 / steps as f64);
            (d, vol(d) / d)
        })
        .collect();
    let m = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    // a flat piece at level q keeps positive volume as δ → 0
    let violated = vol(1e-4) >= 0.5 * vol(1e-2) && vol(1e-4) > 0.0 && vol(1e-2) > 1e-2;
    Ok(LevelSetEstimate { m, resolution, ratios, violated })
}

/// Largest finite-difference slope `|f(x_{i+1}) − f(x_i)| · (n − 1)` on a
/// uniform grid of `[0,1]`.
pub fn lipschitz_grid_1d(f: Objective<'_>, points: usize) -> f64 {
    let h = 1.0 / (points - 1) as f64;
    (1..points)
        .into_par_iter()
        .map(|i| (f(&[i as f64 * h]) - f(&[(i - 1) as f64 * h])).abs() / h)
        .reduce(|| 0.0, f64::max)
}

/// Largest `|f(x) − f(y)| / |x − y|` over `pairs` random pairs in the cube.
pub fn lipschitz_random_pairs(f: Objective<'_>, dim: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        // half the pairs are close, to probe local slopes
        let scale = if rng.random::<bool>() { 1.0 } else { 1e-3 };
        let y: Vec<f64> =
            x.iter().map(|&xi| (xi + scale * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect();
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > 0.0 {
            best = best.max((f(&x) - f(&y)).abs() / dist);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    /// Asymptotic 95% half-width `1.96·√(α(1−α)/M) / density`.
    pub half_width: f64,
    pub samples: usize,
}

pub const MIN_MC_SAMPLES: usize = 100;

/// Empirical α-quantile of `samples` draws of `f(X)` by inverse-CDF sampling.
pub fn monte_carlo_quantile(p: &TestProblem, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    monte_carlo_quantile_of(p.f(), &p.measure, p.alpha, samples, seed)
}

pub fn monte_carlo_quantile_of(
    f: Objective<'_>,
    measure: &ProductMeasure,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let dim = measure.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniforms: Vec<f64> = (0..samples * dim).map(|_| rng.random::<f64>()).collect();
    let mut values: Vec<f64> = uniforms
        .par_chunks(dim)
        .map(|u| f(&measure.transform_uniform(u)))
        .collect();
    values.par_sort_by(f64::total_cmp);
    let idx = ((alpha * samples as f64).ceil() as usize).clamp(1, samples) - 1;
    let estimate = values[idx];
    let h = (samples as f64).sqrt().ceil() as usize;
    let lo = values[idx.saturating_sub(h)];
    let hi = values[(idx + h).min(samples - 1)];
    let span = (idx + h).min(samples - 1) - idx.saturating_sub(h);
    let half_width = if hi > lo {
        let density = span as f64 / (samples as f64 * (hi - lo));
        1.96 * (alpha * (1.0 - alpha) / samples as f64).sqrt() / density
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { estimate, half_width, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_f1_value_at_zero() {
        // 0.8·0 − 0.3 + 1 + e^{−1.62}
        assert!((paper_f1(0.0) - 0.897_898_699_083_614_7).abs() < 1e-14);
    }

    #[test]
    fn irwin_hall() {
        assert!((irwin_hall2_quantile(0.999) - 1.955_278_640_450_004_2).abs() < 1e-14);
        assert_eq!(irwin_hall2_quantile(0.5), 1.0);
        assert!((irwin_hall2_quantile(1.0 - 1e-12) - 2.0).abs() < 1e-5);
    }

    #[test]
    fn brute_force_simple() {
        let p = linear_d1().with_alpha(0.25).unwrap();
        assert!((brute_force_quantile(&p, 1000).unwrap() - 0.25).abs() <= 1e-3);
        let c = TestProblem { objective: Arc::new(|_: &[f64]| 0.4), true_quantile: None, ..linear_d1() };
        assert_eq!(brute_force_quantile(&c, 1000).unwrap(), 0.4);
        assert!(brute_force_quantile(&p, 999).is_err());
    }

    #[test]
    fn crossing_oracle_linear() {
        let u = Marginal::uniform();
        let q = quantile_1d(&|x: &[f64]| x[0], &u, 0.3, 101).unwrap();
        assert!((q - 0.3).abs() < 1e-14);
        let q = quantile_1d(&|x: &[f64]| (x[0] - 0.5).abs(), &u, 0.5, 100).unwrap();
        assert!((q - 0.25).abs() < 1e-14);
    }

    #[test]
    fn level_set_linear_and_constant() {
        let est = estimate_level_set_m(&|x: &[f64]| x[0], 1, 0.5, 1_000_000).unwrap();
        assert!((est.m - 2.0).abs() < 0.05, "{}", est.m);
        assert!(!est.violated);
        let flat = estimate_level_set_m(&|_: &[f64]| 0.5, 1, 0.5, 10_000).unwrap();
        assert!(flat.violated);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let p = linear_d1();
        let a = monte_carlo_quantile(&p, 100_000, 7).unwrap();
        let b = monte_carlo_quantile(&p, 100_000, 7).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - 0.5).abs() < 0.01);
        assert!(a.half_width > 0.0 && a.half_width < 0.01);
        assert!(monte_carlo_quantile(&p, 99, 7).is_err());
    }

    #[test]
    fn builtin_lookup() {
        for name in BUILTIN_PROBLEMS {
            assert_eq!(builtin_problem(name).unwrap().name, name);
        }
        assert!(builtin_problem("nope").is_err());
    }
}
