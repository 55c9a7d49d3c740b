#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use lipquant::measure::{Marginal, ProductMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Func = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A random Lipschitz function with kinks, oscillation and a clamp, together
/// with a valid Euclidean Lipschitz constant.
pub struct RandomFunction {
    pub f: Func,
    pub lipschitz: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c + Σ aᵢ|wᵢ·x − bᵢ| + Σ sᵢ sin(ωᵢ·x + φᵢ)`, clamped from above at `cap`.
pub fn random_function(dim: usize, seed: u64) -> RandomFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec = |rng: &mut ChaCha8Rng, s: f64| (0..dim).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
    let kinks: Vec<(f64, Vec<f64>, f64)> = (0..rng.random_range(1..4))
        .map(|_| (rng.random_range(-1.0..1.0), vec(&mut rng, 2.0), rng.random_range(-1.0..1.0)))
        .collect();
    let waves: Vec<(f64, Vec<f64>, f64)> = (0..rng.random_range(0..3))
        .map(|_| (rng.random_range(-0.3..0.3), vec(&mut rng, 6.0), rng.random_range(0.0..6.3)))
        .collect();
    let c = rng.random_range(-1.0..1.0);
    let cap = rng.random_range(0.5..3.0);
    let lipschitz = kinks.iter().map(|(a, w, _)| a.abs() * norm(w)).sum::<f64>()
        + waves.iter().map(|(s, w, _)| s.abs() * norm(w)).sum::<f64>();
    let f = move |x: &[f64]| {
        let mut v = c;
        for (a, w, b) in &kinks {
            v += a * (dot(w, x) - b).abs();
        }
        for (s, w, p) in &waves {
            v += s * (dot(w, x) + p).sin();
        }
        v.min(cap)
    };
    RandomFunction { f: Arc::new(f), lipschitz: lipschitz.max(1e-3) }
}

pub fn random_measure(dim: usize, seed: u64) -> ProductMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let marginals = (0..dim)
        .map(|_| {
            if rng.random::<bool>() {
                Marginal::uniform()
            } else {
                Marginal::truncated_normal(rng.random_range(0.0..1.0), rng.random_range(0.1..0.6)).unwrap()
            }
        })
        .collect();
    ProductMeasure::new(marginals).unwrap()
}

/// Wraps `f` so that every call is counted.
pub struct Counted<'a> {
    f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    calls: AtomicU64,
}

impl<'a> Counted<'a> {
    pub fn new(f: &'a (dyn Fn(&[f64]) -> f64 + Sync)) -> Self {
        Self { f, calls: AtomicU64::new(0) }
    }

    pub fn call(&self, x: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        (self.f)(x)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
