use std::sync::Arc;

use fraclap::geometry::DEFAULT_T_SAMPLES;
use fraclap::grid::{build_grid, DomainSpec, FieldSpec, GridDomain};
use fraclap::operator::{assemble_weights, ExteriorSpec, FractionalParams, ProblemSpec};
use fraclap::principles::{check_condition_a2_with, check_weak_comparison, data_gap};
use fraclap::solver::SolverOptions;
use proptest::prelude::*;

fn annulus() -> Arc<GridDomain> {
    build_grid(
        &DomainSpec::Annulus {
            r_in: 0.5,
            r_out: 1.5,
        },
        1,
        1.0 / 16.0,
        None,
    )
    .unwrap()
}

fn problem(grid: &Arc<GridDomain>, p: f64, hole: f64, outside: f64, g: f64) -> ProblemSpec {
    let w = Arc::new(assemble_weights(grid, FractionalParams::new(0.5, p).unwrap()).unwrap());
    let ext = ExteriorSpec {
        hole: FieldSpec::Constant { value: hole },
        outside: FieldSpec::Constant { value: outside },
        far_field: outside,
    };
    ProblemSpec::from_fields(
        w,
        &FieldSpec::Constant { value: 0.0 },
        &FieldSpec::Constant { value: g },
        &ext,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_give_ordered_solutions(
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        hole in -1.0f64..1.0,
        outside in -1.0f64..1.0,
        g in -1.0f64..1.0,
        gaps in (0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5),
    ) {
        let grid = annulus();
        let b = problem(&grid, p, hole, outside, g);
        let a = problem(&grid, p, hole + gaps.0, outside + gaps.1, g + gaps.2);
        let gap = data_gap(&a, &b).unwrap();
        prop_assert!((gap - gaps.0.max(gaps.1).max(gaps.2)).abs() < 1e-12);
        let r = check_weak_comparison(&a, &b, &SolverOptions::default()).unwrap();
        prop_assert!(r.holds, "margin {} bound {}", r.margin, r.bound);
        if gaps.0 > 0.0 || gaps.1 > 0.0 || gaps.2 > 0.0 {
            prop_assert!(data_gap(&b, &a).is_err());
        }
    }

    #[test]
    fn power_weights_satisfy_a2_exactly_above_critical_exponent(
        s in 0.1f64..0.9,
        p in 1.2f64..3.5,
        offset in 0.05f64..2.0,
    ) {
        let grid = build_grid(&DomainSpec::Annulus { r_in: 0.25, r_out: 3.0 }, 2, 0.25, None).unwrap();
        let sp = s * p;
        let power = |gamma: f64| move |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(gamma);
        let above = check_condition_a2_with(power(-sp + offset), &grid, s, p, &DEFAULT_T_SAMPLES).unwrap();
        prop_assert!(above.holds && above.margin >= 0.0);
        let below = check_condition_a2_with(power(-sp - offset), &grid, s, p, &DEFAULT_T_SAMPLES).unwrap();
        prop_assert!(!below.holds);
        prop_assert!(below.witness.unwrap().t.is_some());
    }
}

#[test]
fn critical_power_is_scale_invariant() {
    let grid = build_grid(
        &DomainSpec::Annulus {
            r_in: 0.25,
            r_out: 3.0,
        },
        1,
        0.125,
        None,
    )
    .unwrap();
    let (s, p) = (0.5, 2.0);
    let r = check_condition_a2_with(|x| x[0].abs().powf(-s * p), &grid, s, p, &DEFAULT_T_SAMPLES)
        .unwrap();
    assert!(r.holds);
    assert!(r.margin.abs() < 1e-10);
}

#[test]
fn mismatched_exponents_are_not_ordered() {
    let grid = annulus();
    let a = problem(&grid, 2.0, 1.0, 0.0, 0.0);
    let b = problem(&grid, 3.0, 1.0, 0.0, 0.0);
    assert!(data_gap(&a, &b).is_err());
}
