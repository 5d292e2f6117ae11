use std::sync::Arc;

use fraclap::grid::{build_grid, DiscreteFunction, DomainSpec, FieldSpec, GridDomain};
use fraclap::operator::{
    assemble_weights, residual_of, total_energy, weak_residual, ExteriorSpec, FractionalParams,
    KernelWeights, ProblemSpec,
};
use proptest::prelude::*;

fn line(cells: usize) -> Arc<GridDomain> {
    build_grid(
        &DomainSpec::Ball { radius: 1.0 },
        1,
        2.0 / cells as f64,
        None,
    )
    .unwrap()
}

fn disc() -> Arc<GridDomain> {
    build_grid(
        &DomainSpec::Annulus {
            r_in: 0.3,
            r_out: 1.0,
        },
        2,
        0.2,
        None,
    )
    .unwrap()
}

fn problem(
    grid: &Arc<GridDomain>,
    s: f64,
    p: f64,
    q: f64,
    g: f64,
    ext: ExteriorSpec,
) -> ProblemSpec {
    let w = Arc::new(assemble_weights(grid, FractionalParams::new(s, p).unwrap()).unwrap());
    ProblemSpec::from_fields(
        w,
        &FieldSpec::Constant { value: q },
        &FieldSpec::Constant { value: g },
        &ext,
    )
    .unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Values on every node: `interior` inside, `outside` elsewhere.
fn nodal(
    grid: &Arc<GridDomain>,
    interior: &[f64],
    outside: impl Fn(usize) -> f64,
    far: f64,
) -> DiscreteFunction {
    let values = (0..grid.len())
        .map(|i| match grid.interior_slot(i) {
            Some(k) => interior[k],
            None => outside(i),
        })
        .collect();
    DiscreteFunction::new(grid.clone(), values, far).unwrap()
}

fn weights(grid: &Arc<GridDomain>, s: f64, p: f64) -> KernelWeights {
    assemble_weights(grid, FractionalParams::new(s, p).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_are_symmetric_and_positive(s in 0.1f64..0.9, p in 1.1f64..4.0, cells in 6usize..30) {
        let grid = line(cells);
        let w = weights(&grid, s, p);
        for i in 0..grid.len() {
            prop_assert!(w.exterior_coefficient(i) > 0.0);
            for j in 0..grid.len() {
                prop_assert_eq!(w.weight(i, j), w.weight(j, i));
                let expected_sign = i != j;
                prop_assert_eq!(w.weight(i, j) > 0.0, expected_sign);
            }
        }
    }

    #[test]
    fn residual_is_the_energy_gradient(
        s in 0.1f64..0.9,
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        cells in 8usize..40,
        seed in prop::collection::vec(-1.0f64..1.0, 64),
        q in 0.0f64..2.0,
        g in -1.0f64..1.0,
    ) {
        let grid = line(cells);
        let prob = problem(&grid, s, p, q, g, ExteriorSpec::constant(0.4));
        let x: Vec<f64> = seed[..grid.interior().len()].to_vec();
        let res = weak_residual(&prob.embed(&x).unwrap(), &prob).unwrap();
        let scale = max_abs(&res);
        for k in 0..x.len() {
            let eta = 1e-6;
            let mut xp = x.clone();
            xp[k] += eta;
            let ep = total_energy(&prob.embed(&xp).unwrap(), &prob).unwrap();
            xp[k] = x[k] - eta;
            let em = total_energy(&prob.embed(&xp).unwrap(), &prob).unwrap();
            let fd = (ep - em) / (2.0 * eta);
            prop_assert!((fd - res[k]).abs() <= 1e-5 * scale, "node {k}: fd {fd} residual {}", res[k]);
        }
    }

    #[test]
    fn constants_are_annihilated(s in 0.1f64..0.9, p in 1.2f64..3.5, c in -3.0f64..3.0) {
        let grid = disc();
        let prob = problem(&grid, s, p, 0.0, 0.0, ExteriorSpec::constant(c));
        let res = weak_residual(&DiscreteFunction::constant(grid.clone(), c), &prob).unwrap();
        prop_assert!(max_abs(&res) / grid.cell_measure() < 1e-10);
    }

    #[test]
    fn residual_is_shift_invariant_odd_and_homogeneous(
        s in 0.1f64..0.9,
        p in 1.2f64..3.5,
        seed in prop::collection::vec(-1.0f64..1.0, 64),
        c in -2.0f64..2.0,
        lambda in 0.2f64..3.0,
    ) {
        let grid = line(24);
        let prob = problem(&grid, s, p, 0.0, 0.0, ExteriorSpec::default());
        let x = &seed[..grid.interior().len()];
        let outside = |i: usize| 0.5 * grid.node(i)[0];
        let u = nodal(&grid, x, outside, 0.1);
        let r = residual_of(&u, &prob).unwrap();
        let scale = max_abs(&r);

        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let r_shift = residual_of(&nodal(&grid, &shifted, |i| outside(i) + c, 0.1 + c), &prob).unwrap();
        let negated: Vec<f64> = x.iter().map(|v| -v).collect();
        let r_neg = residual_of(&nodal(&grid, &negated, |i| -outside(i), -0.1), &prob).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let r_scaled = residual_of(&nodal(&grid, &scaled, |i| lambda * outside(i), lambda * 0.1), &prob).unwrap();
        let factor = lambda.powf(p - 1.0);
        for k in 0..r.len() {
            prop_assert!((r_shift[k] - r[k]).abs() <= 1e-9 * scale);
            prop_assert_eq!(r_neg[k], -r[k]);
            prop_assert!((r_scaled[k] - factor * r[k]).abs() <= 1e-9 * factor * scale);
        }
    }

    #[test]
    fn energy_is_convex_along_segments(
        p in 1.1f64..4.0,
        a in prop::collection::vec(-1.0f64..1.0, 64),
        b in prop::collection::vec(-1.0f64..1.0, 64),
        t in 0.0f64..1.0,
    ) {
        let grid = line(30);
        let prob = problem(&grid, 0.5, p, 0.5, 0.3, ExteriorSpec::constant(0.2));
        let n = grid.interior().len();
        let mix: Vec<f64> = (0..n).map(|k| (1.0 - t) * a[k] + t * b[k]).collect();
        let e = |x: &[f64]| total_energy(&prob.embed(x).unwrap(), &prob).unwrap();
        let (ea, eb, em) = (e(&a[..n]), e(&b[..n]), e(&mix));
        prop_assert!(em <= (1.0 - t) * ea + t * eb + 1e-12 * (ea.abs() + eb.abs()));
    }
}

#[test]
fn exterior_data_enter_through_the_residual_only() {
    let grid = disc();
    let prob = problem(&grid, 0.5, 2.0, 0.0, 0.0, ExteriorSpec::constant(1.0));
    // zero inside, one outside: every interior residual is negative
    let u = prob.embed(&vec![0.0; grid.interior().len()]).unwrap();
    let r = weak_residual(&u, &prob).unwrap();
    assert!(r.iter().all(|v| *v < 0.0));
    // a function with other exterior values is rejected
    assert!(weak_residual(&DiscreteFunction::constant(grid.clone(), 0.0), &prob).is_err());
}
