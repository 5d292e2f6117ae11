use std::sync::Arc;

use fraclap::geometry::{
    check_starshaped, default_levels, lipschitz_estimate, ray_violation, sample_points,
    superlevel_mask, DEFAULT_T_SAMPLES,
};
use fraclap::grid::{
    build_grid, sample_function, DiscreteFunction, DomainSpec, FarField, GridDomain,
};
use proptest::prelude::*;

fn disc() -> Arc<GridDomain> {
    build_grid(&DomainSpec::Ball { radius: 1.0 }, 2, 0.05, None).unwrap()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn superlevel_sets_are_nested(values in prop::collection::vec(-2.0f64..2.0, 1..200), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = build_grid(&DomainSpec::Ball { radius: 1.0 }, 1, 2.0 / (values.len() as f64 + 1.0), None).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|i| values[i % values.len()]).collect();
        let u = DiscreteFunction::new(grid, vals, 0.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (big, small) = (superlevel_mask(&u, lo), superlevel_mask(&u, hi));
        prop_assert!(small.iter().zip(&big).all(|(s, b)| !s || *b));
    }
}

/// Ten functions with starshaped superlevel sets followed by ten without.
fn synthetic(k: usize) -> (Box<dyn Fn(&[f64]) -> f64 + Sync>, bool) {
    let a = 0.5 + 0.3 * (k % 10) as f64;
    match k {
        0..=2 => (Box::new(move |x| (1.0 - norm(x).powf(a)).max(0.0)), true),
        3..=5 => (Box::new(move |x| (-a * norm(x).powi(2)).exp()), true),
        6..=7 => (Box::new(move |x| 1.0 / (1.0 + a * norm(x))), true),
        8..=9 => (
            // anisotropic but decreasing along every ray
            Box::new(move |x| (-(x[0] * x[0] + a * x[1] * x[1])).exp()),
            true,
        ),
        10..=14 => {
            // off-centre bump: rays from the origin re-enter high superlevel sets
            let c = [0.3 + 0.08 * (k - 10) as f64, 0.1];
            (
                Box::new(move |x| (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / 0.02).exp()),
                false,
            )
        }
        _ => {
            // a ridge on a circle
            let r0 = 0.35 + 0.08 * (k - 15) as f64;
            (
                Box::new(move |x| (-(norm(x) - r0).powi(2) / 0.01).exp()),
                false,
            )
        }
    }
}

#[test]
fn pointwise_and_ray_tests_agree_on_synthetic_functions() {
    let grid = disc();
    let samples = sample_points(&grid, 64, 3);
    let levels = default_levels();
    for k in 0..20 {
        let (f, expected) = synthetic(k);
        let u = sample_function(&grid, |x| f(x), FarField::Value(0.0)).unwrap();
        let eps = lipschitz_estimate(&u) * grid.h();
        let pointwise =
            check_starshaped(&u, &DEFAULT_T_SAMPLES, &samples, &levels, eps).starshaped_holds;
        let rays = levels
            .iter()
            .all(|&l| ray_violation(&u, l, 72, 0.25 * grid.h()) <= eps);
        assert_eq!(pointwise, expected, "pointwise test on function {k}");
        assert_eq!(rays, expected, "ray test on function {k}");
    }
}
