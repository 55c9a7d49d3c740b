use lipquant::measure::{Marginal, ProductMeasure};
use lipquant::oracles::{
    brute_force_quantile, estimate_level_set_m, irwin_hall2_quantile, lipschitz_grid_1d, lipschitz_random_pairs,
    monte_carlo_quantile, paper_d1, paper_d2, paper_f1, quantile_1d,
};

/// Truncated-normal CDF by composite Simpson on the density; no erf involved.
fn simpson_truncnorm_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let density = |t: f64| (-0.5 * ((t - mu) / sigma).powi(2)).exp();
    let integrate = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = density(a) + density(b);
        for i in 1..n {
            s += density(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    integrate(0.0, x) / integrate(0.0, 1.0)
}

#[test]
fn truncated_normal_matches_quadrature() {
    let m = Marginal::truncated_normal(0.2, 0.2).unwrap();
    for x in [0.0, 0.05, 0.2, 1.0 / 3.0, 0.5, 0.9, 1.0] {
        let q = simpson_truncnorm_cdf(x, 0.2, 0.2);
        assert!((m.cdf(x) - q).abs() < 1e-13, "x={x}: {} vs {q}", m.cdf(x));
    }
    assert!((m.cdf(0.2) - 0.405_728_564_409_689_84).abs() < 1e-13);
    let cell = lipquant::grid::MultiIndex::new(1, vec![0]).unwrap();
    let p = ProductMeasure::new(vec![m]).unwrap();
    assert!((p.cell_probability(&cell) - simpson_truncnorm_cdf(1.0 / 3.0, 0.2, 0.2)).abs() < 1e-13);
}

#[test]
fn centered_and_interval_masses_agree() {
    // dyadic centers and widths, so c ± h is exact and both forms see the same interval
    let m = Marginal::truncated_normal(0.8, 0.05).unwrap();
    let tiny = 2f64.powi(-20);
    for (c, h) in [(0.5, 0.5), (0.125, 0.0078125), (0.8125, tiny), (0.9921875, 2f64.powi(-12))] {
        let a = m.centered_mass(c, h);
        let b = m.interval_mass(c - h, c + h);
        assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-16, "c={c} h={h}: {a} vs {b}");
    }
}

#[test]
fn paper_function_value_at_zero() {
    let direct = -0.3 + 1.0 + (-2.0f64 * 0.81).exp();
    assert_eq!(paper_f1(0.0), direct);
    assert!((direct - 0.897_898_699_1).abs() < 1e-10);
}

#[test]
fn paper_lipschitz_estimate() {
    let p = paper_d1();
    let l = lipschitz_grid_1d(p.f(), 1_000_001);
    assert!((1.55..=1.65).contains(&l), "{l}");
    assert!(l <= p.lipschitz);
    assert!(lipschitz_random_pairs(p.f(), 1, 100_000, 3) <= p.lipschitz);
}

#[test]
fn d1_oracles_agree() {
    let p = paper_d1();
    let grid = brute_force_quantile(&p, 1_000_000).unwrap();
    let crossing = quantile_1d(p.f(), &p.measure.marginals()[0], p.alpha, 20_000).unwrap();
    assert!((grid - crossing).abs() < 1e-6, "{grid} vs {crossing}");
    assert!((crossing - 1.3503).abs() < 1e-4);
}

#[test]
fn irwin_hall_grid_matches_closed_form() {
    let p = paper_d2();
    let q = irwin_hall2_quantile(p.alpha);
    assert!((q - (2.0 - 0.002f64.sqrt())).abs() < 1e-15);
    assert!((brute_force_quantile(&p, 2000).unwrap() - q).abs() < 2e-3);
}

#[test]
fn monte_carlo_golden() {
    let p = paper_d2();
    let a = monte_carlo_quantile(&p, 1_000_000, 7).unwrap();
    let b = monte_carlo_quantile(&p, 1_000_000, 7).unwrap();
    assert_eq!(a, b);
    assert!((a.estimate - 1.9553).abs() < 5e-3, "{}", a.estimate);
    assert!((a.estimate - irwin_hall2_quantile(p.alpha)).abs() < 3.0 * a.half_width);
    assert!(monte_carlo_quantile(&p, 99, 7).is_err());
}

/// `sup_δ vol{|x₁ + x₂ − q| ≤ δ} / δ` for uniform `X` on the square.
fn irwin_hall_level_set(q: f64, delta_max: f64) -> f64 {
    let cdf = |s: f64| match s {
        s if s <= 0.0 => 0.0,
        s if s <= 1.0 => s * s / 2.0,
        s if s <= 2.0 => 1.0 - (2.0 - s) * (2.0 - s) / 2.0,
        _ => 1.0,
    };
    (1..=200_000)
        .map(|i| {
            let d = delta_max * i as f64 / 200_000.0;
            (cdf(q + d) - cdf(q - d)) / d
        })
        .fold(0.0, f64::max)
}

#[test]
fn level_set_constant_for_the_sum() {
    let p = paper_d2();
    let q = irwin_hall2_quantile(p.alpha);
    let est = estimate_level_set_m(p.f(), 2, q, 2000).unwrap();
    let exact = irwin_hall_level_set(q, q);
    assert!(!est.violated);
    assert!(est.m <= exact * 1.001 && est.m >= exact * 0.97, "{} vs {exact}", est.m);
}

#[test]
fn level_set_flags_flat_functions() {
    let flat = |x: &[f64]| (x[0] - 0.5).max(0.0);
    let est = estimate_level_set_m(&flat, 1, 0.0, 100_000).unwrap();
    assert!(est.violated);
}
