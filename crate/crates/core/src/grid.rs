//! Ternary subdivision of the unit cube.
//!
//! At level `k` the cube `[0,1]^d` is split into `3^(k·d)` congruent boxes.
//! A box is addressed by a [`MultiIndex`]: one integer digit per axis, each in
//! `[0, 3^k)`. Cells are addressed sparsely; the full grid is never built.
//!
//! Box endpoints are rationals `β/3^k` and `(β+1)/3^k`, kept as integers and
//! converted to `f64` only when leaving this module. Each box is half-open,
//! `[lo, hi)`, except along axes where `β = 3^k - 1`, where it also contains
//! the coordinate `1`. Probability computations treat every box as closed,
//! which is exact for atomless marginals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Deepest level whose centers are still distinct in `f64`.
///
/// `2·3^30 ≈ 4.1e14 < 2^53`, so every center `(2β+1)/(2·3^k)` is a single
/// correctly rounded division and neighbouring centers are ~22 ulps apart.
pub const MAX_LEVEL: u32 = 30;

/// `3^k` as an integer. Panics past [`MAX_LEVEL`] + 9, which no caller reaches.
pub fn pow3(k: u32) -> u64 {
    3u64.checked_pow(k).expect("3^k overflows u64")
}

/// A cell of the level-`k` ternary partition.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    level: u32,
    digits: Vec<u64>,
}

impl MultiIndex {
    /// Builds an index, checking every digit is below `3^level`.
    pub fn new(level: u32, digits: Vec<u64>) -> Result<Self> {
        if digits.is_empty() {
            return Err(Error::InvalidArgument("multi-index needs at least one axis".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "level {level} exceeds the supported maximum {MAX_LEVEL}"
            )));
        }
        let side = pow3(level);
        if let Some(bad) = digits.iter().find(|&&b| b >= side) {
            return Err(Error::InvalidArgument(format!(
                "digit {bad} out of range for level {level} (must be < {side})"
            )));
        }
        Ok(Self { level, digits })
    }

    /// The single level-0 cell of a `dim`-dimensional cube.
    pub fn root(dim: usize) -> Self {
        Self { level: 0, digits: vec![0; dim] }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn dim(&self) -> usize {
        self.digits.len()
    }

    /// Center point `d_β^k`, component `j` equal to `(2β_j+1)/(2·3^k)`.
    pub fn center(&self) -> Vec<f64> {
        let denom = (2 * pow3(self.level)) as f64;
        self.digits.iter().map(|&b| (2 * b + 1) as f64 / denom).collect()
    }

    /// The `3^d` children `3β + c`, `c ∈ {0,1,2}^d`, in lexicographic order of `c`.
    pub fn children(&self) -> Vec<MultiIndex> {
        let dim = self.dim();
        let count = pow3(dim as u32) as usize;
        let mut out = Vec::with_capacity(count);
        for code in 0..count {
            let mut rest = code;
            let mut digits = vec![0u64; dim];
            // last axis varies fastest
            for j in (0..dim).rev() {
                digits[j] = 3 * self.digits[j] + (rest % 3) as u64;
                rest /= 3;
            }
            out.push(MultiIndex { level: self.level + 1, digits });
        }
        out
    }

    /// The child `3β + (1,…,1)`, which shares this cell's center point.
    pub fn center_child(&self) -> MultiIndex {
        MultiIndex {
            level: self.level + 1,
            digits: self.digits.iter().map(|&b| 3 * b + 1).collect(),
        }
    }

    /// Ancestor `l` levels up: componentwise floor-division by `3^l`.
    pub fn parent(&self, steps: u32) -> Result<MultiIndex> {
        if steps > self.level {
            return Err(Error::InvalidArgument(format!(
                "cannot go {steps} levels up from level {}",
                self.level
            )));
        }
        let div = pow3(steps);
        Ok(MultiIndex {
            level: self.level - steps,
            digits: self.digits.iter().map(|&b| b / div).collect(),
        })
    }

    /// The coarsest index with the same center point.
    ///
    /// Center children repeat their parent's center, so two indices evaluate
    /// `f` at the same point exactly when their canonical forms agree.
    pub fn canonical(&self) -> MultiIndex {
        let mut level = self.level;
        let mut digits = self.digits.clone();
        while level > 0 && digits.iter().all(|&b| b % 3 == 1) {
            for b in digits.iter_mut() {
                *b = (*b - 1) / 3;
            }
            level -= 1;
        }
        MultiIndex { level, digits }
    }

    /// Rational box bounds: per axis `(β, β+1)` over the common denominator `3^k`.
    pub fn rational_box(&self) -> (Vec<(u64, u64)>, u64) {
        let den = pow3(self.level);
        (self.digits.iter().map(|&b| (b, b + 1)).collect(), den)
    }

    /// Box `[lower, upper)` per axis in floating point.
    pub fn cell_box(&self) -> (Vec<f64>, Vec<f64>) {
        let den = pow3(self.level) as f64;
        let lower = self.digits.iter().map(|&b| b as f64 / den).collect();
        let upper = self.digits.iter().map(|&b| (b + 1) as f64 / den).collect();
        (lower, upper)
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.clone())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}{:?}", self.level, self.digits)
    }
}

/// Half-width of a level-`k` cell measured as the circumscribed radius:
/// `δ^k = √d / (2·3^k)`.
pub fn half_radius(level: u32, dim: usize) -> f64 {
    (dim as f64).sqrt() / (2.0 * 3f64.powi(level as i32))
}

/// Geometry of one cell, derived from its index.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: MultiIndex,
    pub center: Vec<f64>,
    /// Per-axis half side length `1/(2·3^k)`.
    pub half_width_inf: f64,
    /// Euclidean distance from the center to a corner.
    pub radius: f64,
}

impl Cell {
    pub fn new(index: MultiIndex) -> Self {
        let center = index.center();
        let half_width_inf = 1.0 / (2.0 * pow3(index.level()) as f64);
        let radius = half_radius(index.level(), index.dim());
        Self { index, center, half_width_inf, radius }
    }
}

/// Every cell of level `k` in dimension `dim`, in lexicographic order.
///
/// Only for small grids (tests and full-grid references).
pub fn all_cells(level: u32, dim: usize) -> Vec<MultiIndex> {
    let mut cells = vec![MultiIndex::root(dim)];
    for _ in 0..level {
        cells = cells.iter().flat_map(MultiIndex::children).collect();
    }
    cells.sort();
    cells
}

/// A box `∏ [a_i, b_i]` with `b_i > a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "box bounds must be non-empty and of equal length".into(),
            ));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidArgument(format!(
                    "axis {i}: need finite bounds with upper > lower, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `v(y)_i = a_i + (b_i − a_i)·y_i`.
    pub fn from_unit(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(y, (a, b))| a + (b - a) * y)
            .collect()
    }

    /// `h(x)_i = (x_i − a_i)/(b_i − a_i)`.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (a, b))| (x - a) / (b - a))
            .collect()
    }
}

/// An objective pulled back onto the unit cube, with the constants that
/// rescale its Lipschitz (`c1`) and level-set (`c2`) constants.
pub struct RescaledProblem {
    pub objective: crate::refine::SharedObjective,
    /// `max_i (b_i − a_i)`: the unit-cube function is `c1·L`-Lipschitz.
    pub c1: f64,
    /// `∏_i (b_i − a_i)`: the level-set constant scales to `c2·M`.
    pub c2: f64,
}

/// Wraps `f` defined on `domain` as `g(y) = f(a + (b−a)⊙y)` on the unit cube.
///
/// Quantiles are preserved: `q_α(g, h(X)) = q_α(f, X)`.
pub fn rescale_problem<F>(domain: &BoxDomain, f: F) -> RescaledProblem
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    let c1 = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    let c2 = domain.lower.iter().zip(&domain.upper).map(|(a, b)| b - a).product();
    let domain = domain.clone();
    let objective = Arc::new(move |y: &[f64]| f(&domain.from_unit(y)));
    RescaledProblem { objective, c1, c2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(level: u32, digits: &[u64]) -> MultiIndex {
        MultiIndex::new(level, digits.to_vec()).unwrap()
    }

    #[test]
    fn centers() {
        assert_eq!(idx(0, &[0]).center(), vec![0.5]);
        assert_eq!(idx(1, &[2]).center(), vec![5.0 / 6.0]);
        assert_eq!(idx(1, &[0, 2]).center(), vec![1.0 / 6.0, 5.0 / 6.0]);
    }

    #[test]
    fn half_radius_values() {
        assert_eq!(half_radius(0, 1), 0.5);
        assert!((half_radius(1, 2) - 2f64.sqrt() / 6.0).abs() < 1e-15);
        assert!((half_radius(1, 2) - 0.235_702_26).abs() < 1e-8);
        assert!((half_radius(3, 1) - 1.0 / 54.0).abs() < 1e-16);
        for k in 0..10 {
            for d in 1..4 {
                let ratio = half_radius(k, d) / half_radius(k + 1, d);
                assert!((ratio - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn children_of_root_and_interior() {
        let kids: Vec<_> = idx(0, &[0]).children();
        assert_eq!(kids, vec![idx(1, &[0]), idx(1, &[1]), idx(1, &[2])]);
        let kids: Vec<_> = idx(1, &[2]).children();
        assert_eq!(kids, vec![idx(2, &[6]), idx(2, &[7]), idx(2, &[8])]);
        let beta = idx(2, &[4, 7]);
        assert_eq!(beta.children().len(), 9);
        assert_eq!(beta.center_child().center(), beta.center());
    }

    #[test]
    fn parent_steps() {
        assert_eq!(idx(2, &[7]).parent(1).unwrap(), idx(1, &[2]));
        assert_eq!(idx(2, &[7, 0]).parent(2).unwrap(), idx(0, &[0, 0]));
        assert_eq!(idx(1, &[2]).parent(0).unwrap(), idx(1, &[2]));
        assert!(idx(1, &[2]).parent(2).is_err());
    }

    #[test]
    fn rejects_out_of_range_digits() {
        assert!(MultiIndex::new(1, vec![3]).is_err());
        assert!(MultiIndex::new(0, vec![]).is_err());
        assert!(MultiIndex::new(MAX_LEVEL + 1, vec![0]).is_err());
    }

    #[test]
    fn canonical_collapses_center_chains() {
        let root = MultiIndex::root(2);
        let deep = root.center_child().center_child().center_child();
        assert_eq!(deep.canonical(), root);
        let off = idx(2, &[4, 3]);
        assert_eq!(off.canonical(), off);
        assert_eq!(idx(2, &[4, 4]).canonical(), idx(1, &[1, 1]).canonical());
    }

    #[test]
    fn boxes() {
        assert_eq!(idx(1, &[0]).cell_box(), (vec![0.0], vec![1.0 / 3.0]));
        assert_eq!(idx(1, &[2]).cell_box(), (vec![2.0 / 3.0], vec![1.0]));
    }

    /// Level-k cells tile the cube: checked exactly on integer endpoints.
    #[test]
    fn partition_is_exact() {
        for dim in 1..=3usize {
            for level in 0..=5u32 {
                if pow3(level * dim as u32) > 30_000 {
                    continue;
                }
                let cells = all_cells(level, dim);
                let den = pow3(level);
                assert_eq!(cells.len() as u64, pow3(level * dim as u32));
                // volumes sum to one: each box has integer volume 1 over den^dim
                let total: u64 = cells
                    .iter()
                    .map(|c| {
                        let (b, _) = c.rational_box();
                        b.iter().map(|(lo, hi)| hi - lo).product::<u64>()
                    })
                    .sum();
                assert_eq!(total, den.pow(dim as u32));
                // disjoint interiors: integer lower corners are all distinct
                let mut corners: Vec<Vec<u64>> =
                    cells.iter().map(|c| c.rational_box().0.iter().map(|p| p.0).collect()).collect();
                corners.sort();
                corners.dedup();
                assert_eq!(corners.len(), cells.len());
                for c in &cells {
                    assert!(c.rational_box().0.iter().all(|&(lo, hi)| hi <= den && lo < hi));
                }
            }
        }
    }

    #[test]
    fn children_tile_parent() {
        let parent = idx(2, &[5, 1]);
        let (pb, pden) = parent.rational_box();
        let kids = parent.children();
        let (_, cden) = kids[0].rational_box();
        assert_eq!(cden, 3 * pden);
        let vol: u64 = kids
            .iter()
            .map(|c| c.rational_box().0.iter().map(|(lo, hi)| hi - lo).product::<u64>())
            .sum();
        let pvol: u64 = pb.iter().map(|(lo, hi)| 3 * (hi - lo)).product();
        assert_eq!(vol, pvol);
        for kid in &kids {
            for ((clo, chi), (plo, phi)) in kid.rational_box().0.iter().zip(&pb) {
                assert!(*clo >= 3 * plo && *chi <= 3 * phi);
            }
            assert_eq!(kid.parent(1).unwrap(), parent);
        }
    }

    #[test]
    fn cell_geometry() {
        let cell = idx(2, &[4]).cell();
        assert!((cell.half_width_inf - 1.0 / 18.0).abs() < 1e-16);
        assert!((cell.radius - 1.0 / 18.0).abs() < 1e-16);
        assert_eq!(cell.center, vec![0.5]);
    }

    #[test]
    fn rescaling() {
        let unit = BoxDomain::unit(3);
        let r = rescale_problem(&unit, |x: &[f64]| x.iter().sum());
        assert_eq!((r.c1, r.c2), (1.0, 1.0));
        assert_eq!((r.objective)(&[0.1, 0.2, 0.3]), 0.1 + 0.2 + 0.3);

        let line = BoxDomain::new(vec![0.0], vec![2.0]).unwrap();
        let r = rescale_problem(&line, |x: &[f64]| x[0]);
        assert_eq!((r.c1, r.c2), (2.0, 2.0));
        assert_eq!((r.objective)(&[0.25]), 0.5);

        let rect = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap();
        let r = rescale_problem(&rect, |x: &[f64]| x[0] + x[1]);
        assert_eq!((r.c1, r.c2), (3.0, 6.0));
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
    }
}
