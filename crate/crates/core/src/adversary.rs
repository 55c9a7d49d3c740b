//! Fooling pairs for rate optimality.
//!
//! Given `N` query points, build `f̄` and `f̃` that coincide at every query
//! yet have α-quantiles (α = 1/2, uniform law) at least a prescribed gap
//! apart. Any estimator that sees only the `N` values must then err by at
//! least half the gap on one of the two functions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{pow3, MultiIndex};
use crate::measure::ProductMeasure;
use crate::oracles::{brute_force_quantile_of, SharedObjective};

/// Median level used by both constructions.
pub const ALPHA: f64 = 0.5;
/// Default slope boost and ratio for the one-dimensional construction.
pub const D1_BOOST: f64 = 4.0;
pub const D1_RHO: f64 = 0.5;
/// Gap constant claimed for the one-dimensional construction, just below 1/18.
pub const D1_GAP_CONSTANT: f64 = (1.0 / 18.0) * (1.0 - 1e-6);

/// Smallest admissible slope boost in dimension `d`: `5^{1/d} / (6^{1/d} − 5^{1/d})`.
pub fn boost_threshold(dim: usize) -> f64 {
    let p = 1.0 / dim as f64;
    5f64.powf(p) / (6f64.powf(p) - 5f64.powf(p))
}

/// Default slope boost in dimension `d ≥ 2`: twice the threshold.
pub fn default_boost(dim: usize) -> f64 {
    2.0 * boost_threshold(dim)
}

/// `1 / (12·(3^{d−1} − 1)·3^{1/(d−1)})`.
pub fn gap_constant(dim: usize) -> f64 {
    let dm1 = dim as f64 - 1.0;
    1.0 / (12.0 * (3f64.powf(dm1) - 1.0) * 3f64.powf(1.0 / dm1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryPlacement {
    /// Independent uniform points.
    Random { seed: u64 },
    /// One query at the center of each candidate region in turn, so the
    /// construction is left with as few unqueried regions as possible.
    Targeted,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Construction {
    Hyperplane {
        /// Level `j` of the cells along `x₁ = 1/2`.
        level: u32,
        hat_cells: Vec<MultiIndex>,
        tilde_cells: Vec<MultiIndex>,
    },
    Intervals {
        rho: f64,
        /// `I_1, …, I_{N+1}`, each as one or two closed pieces.
        intervals: Vec<Vec<(f64, f64)>>,
        /// Position of the bumped interval in `intervals`.
        chosen: usize,
        unqueried: usize,
    },
}

#[derive(Clone)]
pub struct Adversary {
    pub dim: usize,
    pub query_points: Vec<Vec<f64>>,
    pub f_bar: SharedObjective,
    pub f_tilde: SharedObjective,
    pub slope_boost: f64,
    /// Gap the construction guarantees between the two medians.
    pub claimed_gap: f64,
    pub construction: Construction,
}

impl std::fmt::Debug for Adversary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Adversary")
            .field("dim", &self.dim)
            .field("queries", &self.query_points.len())
            .field("slope_boost", &self.slope_boost)
            .field("claimed_gap", &self.claimed_gap)
            .field("construction", &self.construction)
            .finish_non_exhaustive()
    }
}

fn check_queries(points: &[Vec<f64>], dim: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("at least one query point is required".into()));
    }
    for p in points {
        if p.len() != dim || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidArgument(format!("query point {p:?} is not in the unit cube of dimension {dim}")));
        }
    }
    Ok(())
}

/// Sup-norm distance from `x` to the complement of the box `[lo, hi]`
/// (zero outside the box).
fn depth_in_box(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&xi, (&a, &b))| (xi - a).min(b - xi))
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

fn in_open_box(x: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    x.iter().zip(lo.iter().zip(hi)).all(|(&xi, (&a, &b))| a < xi && xi < b)
}

/// Column of level-`j` cells meeting `x₁ = 1/2` in dimension 2.
fn hyperplane_cells(level: u32) -> Vec<MultiIndex> {
    let side = pow3(level);
    let mid = (side - 1) / 2;
    (0..side).map(|t| MultiIndex::new(level, vec![mid, t]).expect("digits in range")).collect()
}

/// Smallest `j` with `3^{j(d−1)} ≥ 3N`.
pub fn hyperplane_level(n: usize, dim: usize) -> u32 {
    let mut j = 1;
    while 3f64.powi((j * (dim as u32 - 1)) as i32) < 3.0 * n as f64 {
        j += 1;
    }
    j
}

/// Hyperplane construction in dimension 2: `f̄(x) = x₁` and `f̃` adds a
/// pyramid of slope `boost` on every cell along `x₁ = 1/2` whose interior
/// holds no query.
pub fn build_adversary_d2(query_points: Vec<Vec<f64>>, boost: f64) -> Result<Adversary> {
    let dim = 2;
    check_queries(&query_points, dim)?;
    if boost.is_nan() || boost <= boost_threshold(dim) {
        return Err(Error::InvalidArgument(format!(
            "slope boost must exceed {:.4}, got {boost}",
            boost_threshold(dim)
        )));
    }
    let n = query_points.len();
    let level = hyperplane_level(n, dim);
    let hat_cells = hyperplane_cells(level);
    let tilde_cells: Vec<MultiIndex> = hat_cells
        .iter()
        .filter(|c| {
            let (lo, hi) = c.cell_box();
            !query_points.iter().any(|q| in_open_box(q, &lo, &hi))
        })
        .cloned()
        .collect();
    debug_assert!(tilde_cells.len() >= 2 * n);
    // bumped cells by position along the column
    let side = pow3(level) as usize;
    let mut boxes: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; side];
    for c in &tilde_cells {
        boxes[c.digits()[1] as usize] = Some(c.cell_box());
    }
    let f_tilde = Arc::new(move |x: &[f64]| {
        // the boxes are disjoint, so only the cell under x (or a neighbour,
        // after rounding at a boundary) can contribute
        let t = ((x[1] * side as f64) as usize).min(side - 1);
        let bump = (t.saturating_sub(1)..=(t + 1).min(side - 1))
            .filter_map(|i| boxes[i].as_ref())
            .map(|(lo, hi)| depth_in_box(x, lo, hi))
            .fold(0.0, f64::max);
        x[0] + boost * bump
    });
    Ok(Adversary {
        dim,
        query_points,
        f_bar: Arc::new(|x: &[f64]| x[0]),
        f_tilde,
        slope_boost: boost,
        claimed_gap: gap_constant(dim) / n as f64,
        construction: Construction::Hyperplane { level, hat_cells, tilde_cells },
    })
}

/// Nested intervals around 1/2: `I_j = I_{j,−} ∪ I_{j,+}` for `j ≤ N`, and
/// the central `I_{N+1}` of width `ρ^N`.
pub fn d1_intervals(n: usize, rho: f64) -> Vec<Vec<(f64, f64)>> {
    let mut out: Vec<Vec<(f64, f64)>> = (1..=n)
        .map(|j| {
            let (a, b) = (rho.powi(j as i32 - 1), rho.powi(j as i32));
            vec![(0.5 * (1.0 - a), 0.5 * (1.0 - b)), (0.5 * (1.0 + b), 0.5 * (1.0 + a))]
        })
        .collect();
    let c = rho.powi(n as i32);
    out.push(vec![(0.5 * (1.0 - c), 0.5 * (1.0 + c))]);
    out
}

/// Interval construction in dimension 1: `f̄(x) = x` and `f̃` adds a tent
/// of slope `boost` on the narrowest interval whose interior holds no query.
pub fn build_adversary_d1(query_points: Vec<Vec<f64>>, rho: f64, boost: f64) -> Result<Adversary> {
    check_queries(&query_points, 1)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0,1), got {rho}")));
    }
    if boost.is_nan() || boost <= (1.0 + rho) / (1.0 - rho) {
        return Err(Error::InvalidArgument(format!(
            "slope boost must exceed (1+ρ)/(1−ρ) = {:.4}, got {boost}",
            (1.0 + rho) / (1.0 - rho)
        )));
    }
    let n = query_points.len();
    let intervals = d1_intervals(n, rho);
    let hit = |pieces: &[(f64, f64)]| {
        query_points.iter().any(|q| pieces.iter().any(|&(a, b)| a < q[0] && q[0] < b))
    };
    let free: Vec<usize> = (0..intervals.len()).filter(|&i| !hit(&intervals[i])).collect();
    // intervals are listed from widest to narrowest
    let chosen = *free.last().expect("N queries cannot meet all N+1 open intervals");
    let pieces = intervals[chosen].clone();
    let f_tilde = Arc::new(move |x: &[f64]| {
        let bump: f64 = pieces.iter().map(|&(a, b)| depth_in_box(x, &[a], &[b])).sum();
        x[0] + boost * bump
    });
    Ok(Adversary {
        dim: 1,
        query_points,
        f_bar: Arc::new(|x: &[f64]| x[0]),
        f_tilde,
        slope_boost: boost,
        claimed_gap: D1_GAP_CONSTANT * rho.powi(n as i32),
        construction: Construction::Intervals { rho, intervals, chosen, unqueried: free.len() },
    })
}

/// `n` query points in dimension `dim` according to `placement`.
pub fn place_queries(n: usize, dim: usize, placement: QueryPlacement) -> Vec<Vec<f64>> {
    match placement {
        QueryPlacement::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
        }
        QueryPlacement::Targeted if dim == 1 => {
            // centers of I_{1,−}, I_{2,−}, …: the narrow middle interval stays free
            d1_intervals(n, D1_RHO)
                .iter()
                .take(n)
                .map(|pieces| vec![0.5 * (pieces[0].0 + pieces[0].1)])
                .collect()
        }
        QueryPlacement::Targeted => {
            let cells = hyperplane_cells(hyperplane_level(n, dim));
            cells.iter().take(n).map(|c| c.center()).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub n: usize,
    pub claimed_gap: f64,
    pub measured_gap: f64,
    /// `max |f̃ − f̄|` over the queries; zero by construction.
    pub max_residual: f64,
    /// Worst-case error forced on any estimator, `measured_gap / 2`.
    pub implied_error: f64,
    pub resolution: usize,
    pub pass: bool,
}

/// Measures `q(f̃) − q(f̄)` with the brute-force oracle and checks both the
/// agreement at the queries and the claimed gap.
pub fn verify_separation(adv: &Adversary, resolution: usize) -> Result<SeparationReport> {
    let max_residual = adv
        .query_points
        .iter()
        .map(|q| ((adv.f_tilde)(q) - (adv.f_bar)(q)).abs())
        .fold(0.0, f64::max);
    let measure = ProductMeasure::uniform(adv.dim);
    let q_bar = brute_force_quantile_of(adv.f_bar.as_ref(), &measure, ALPHA, resolution)?;
    let q_tilde = brute_force_quantile_of(adv.f_tilde.as_ref(), &measure, ALPHA, resolution)?;
    let measured_gap = q_tilde - q_bar;
    Ok(SeparationReport {
        n: adv.query_points.len(),
        claimed_gap: adv.claimed_gap,
        measured_gap,
        max_residual,
        implied_error: 0.5 * measured_gap,
        resolution,
        pass: max_residual == 0.0 && measured_gap >= adv.claimed_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((gap_constant(2) - 1.0 / 72.0).abs() < 1e-15);
        let t = 5f64.sqrt() / (6f64.sqrt() - 5f64.sqrt());
        assert!((boost_threshold(2) - t).abs() < 1e-12);
        assert_eq!(hyperplane_level(3, 2), 2);
        assert_eq!(hyperplane_level(9, 2), 3);
        assert_eq!(hyperplane_level(27, 2), 4);
        assert_eq!(hyperplane_level(4, 2), 3);
    }

    #[test]
    fn intervals_are_disjoint_and_nested() {
        let iv = d1_intervals(5, 0.5);
        assert_eq!(iv.len(), 6);
        let mut pieces: Vec<(f64, f64)> = iv.iter().flatten().copied().collect();
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pieces.first().unwrap().0, 0.0);
        assert_eq!(pieces.last().unwrap().1, 1.0);
        for w in pieces.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn agreement_at_queries() {
        for n in [1, 3, 9] {
            let q = place_queries(n, 2, QueryPlacement::Random { seed: 3 });
            let adv = build_adversary_d2(q, default_boost(2)).unwrap();
            for p in &adv.query_points {
                assert_eq!((adv.f_tilde)(p), (adv.f_bar)(p));
            }
            let Construction::Hyperplane { tilde_cells, .. } = &adv.construction else { panic!() };
            assert!(tilde_cells.len() >= 2 * n);
        }
        let q = place_queries(6, 1, QueryPlacement::Targeted);
        let adv = build_adversary_d1(q, D1_RHO, D1_BOOST).unwrap();
        for p in &adv.query_points {
            assert_eq!((adv.f_tilde)(p), (adv.f_bar)(p));
        }
        let Construction::Intervals { chosen, .. } = adv.construction else { panic!() };
        assert_eq!(chosen, 6);
    }

    #[test]
    fn bump_height() {
        let adv = build_adversary_d1(vec![vec![0.0]], 0.5, 4.0).unwrap();
        // I_2 = [1/4, 3/4] is free; the tent peaks at 1/2 with height 4·1/4
        assert_eq!((adv.f_tilde)(&[0.5]), 1.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_adversary_d1(vec![vec![0.2]], 0.5, 3.0).is_err());
        assert!(build_adversary_d1(vec![vec![0.2]], 1.0, 30.0).is_err());
        assert!(build_adversary_d1(vec![], 0.5, 4.0).is_err());
        assert!(build_adversary_d2(vec![vec![0.2, 0.3]], 1.0).is_err());
        assert!(build_adversary_d2(vec![vec![0.2]], 30.0).is_err());
    }
}
