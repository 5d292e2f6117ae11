//! Independent oracles for the operator and the solver on seeded random instances.

use std::sync::Arc;

use fraclap::grid::{build_grid, AxisBox, DiscreteFunction, DomainSpec, FieldSpec, GridDomain};
use fraclap::operator::{
    assemble_weights, total_energy, weak_residual, ExteriorSpec, FractionalParams, ProblemSpec,
};
use fraclap::powerlib::derive_seed;
use fraclap::principles::{CheckReport, ReportParams, Witness};
use fraclap::solver::{linear_solve_p2, solve_dirichlet, SolverOptions};
use fraclap::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Error of one instance together with what is needed to report it.
struct Trial {
    error: f64,
    params: FractionalParams,
    grid: Arc<GridDomain>,
    tolerances: Vec<f64>,
    node: Option<usize>,
}

fn rng_for(seed: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, counter))
}

fn random_params(rng: &mut ChaCha8Rng, p: f64) -> Result<FractionalParams> {
    FractionalParams::new(rng.gen_range(0.1..0.9), p)
}

/// Random nonnegative `q`, a random source and random exterior data.
fn random_problem(
    rng: &mut ChaCha8Rng,
    grid: &Arc<GridDomain>,
    params: FractionalParams,
) -> Result<ProblemSpec> {
    let dim = grid.dim();
    let q = FieldSpec::Constant {
        value: if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..2.0)
        },
    };
    let g = if rng.gen_bool(0.5) {
        FieldSpec::Constant {
            value: rng.gen_range(-1.0..1.0),
        }
    } else {
        let center = (0..dim).map(|_| rng.gen_range(-0.3..0.3)).collect();
        FieldSpec::Bump {
            center,
            radius: rng.gen_range(0.3..1.0),
            amplitude: rng.gen_range(-2.0..2.0),
        }
    };
    let outside = rng.gen_range(-1.0..1.0);
    let exterior = ExteriorSpec {
        hole: FieldSpec::Constant {
            value: rng.gen_range(-1.0..1.0),
        },
        outside: FieldSpec::Affine {
            gradient: (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            offset: outside,
        },
        far_field: outside,
    };
    let weights = Arc::new(assemble_weights(grid, params)?);
    ProblemSpec::from_fields(weights, &q, &g, &exterior)
}

/// Aggregates trials into a report whose margin is the negated worst error.
fn summarize(check_id: &str, trials: Vec<Trial>, tol: f64) -> CheckReport {
    let worst = trials
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
        .map(|(k, _)| k)
        .expect("at least one trial");
    let w = &trials[worst];
    let mut r = CheckReport::new(
        check_id,
        ReportParams::new(&w.params, &w.grid, w.tolerances.clone()),
        w.params.flags(),
    );
    r.decide(-w.error, -tol, false);
    r.witness = w.node.map(|i| Witness::at_node(&w.grid, i));
    r.detail("instances", trials.len() as f64);
    r.detail("worst_instance", worst as f64);
    r.detail("max_error", w.error);
    r.detail(
        "max_nodes",
        trials.iter().map(|t| t.grid.len()).max().unwrap_or(0) as f64,
    );
    r
}

/// Weak residual against central differences of the energy on one-dimensional grids.
pub fn gradient_check(
    p: f64,
    instances: usize,
    max_nodes: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let trials = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let params = random_params(&mut rng, p)?;
            let radius = rng.gen_range(0.5..1.5);
            let cells = rng.gen_range(8..=max_nodes - 2);
            let grid = build_grid(
                &DomainSpec::Ball { radius },
                1,
                2.0 * radius / cells as f64,
                None,
            )?;
            let prob = random_problem(&mut rng, &grid, params)?;
            let x: Vec<f64> = (0..grid.interior().len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let res = weak_residual(&prob.embed(&x)?, &prob)?;
            let scale = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let (mut err, mut node) = (0.0f64, None);
            for k in 0..x.len() {
                let eta = 1e-6 * (1.0 + x[k].abs());
                let mut xp = x.clone();
                xp[k] += eta;
                let ep = total_energy(&prob.embed(&xp)?, &prob)?;
                xp[k] = x[k] - eta;
                let em = total_energy(&prob.embed(&xp)?, &prob)?;
                let fd = (ep - em) / (2.0 * eta);
                let e = (fd - res[k]).abs() / scale;
                if e > err {
                    err = e;
                    node = Some(grid.interior()[k]);
                }
            }
            Ok(Trial {
                error: err,
                params,
                grid,
                tolerances: Vec::new(),
                node,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = summarize(&format!("gradient_consistency_p{p}"), trials, tol);
    r.note("relative to the largest residual entry");
    Ok(r)
}

/// Residual of constants with constant exterior data and no potential or source.
pub fn constant_annihilation(grids: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let trials = (0..grids)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let p = rng.gen_range(1.2..3.5);
            let params = random_params(&mut rng, p)?;
            let dim = rng.gen_range(1..=2);
            let domain = if rng.gen_bool(0.5) {
                DomainSpec::Ball {
                    radius: rng.gen_range(0.5..1.5),
                }
            } else {
                DomainSpec::Annulus {
                    r_in: rng.gen_range(0.2..0.5),
                    r_out: rng.gen_range(0.8..1.5),
                }
            };
            let h = if dim == 1 {
                rng.gen_range(0.02..0.1)
            } else {
                rng.gen_range(0.08..0.2)
            };
            let grid = build_grid(&domain, dim, h, None)?;
            let c = rng.gen_range(-2.0..2.0);
            let zero = FieldSpec::Constant { value: 0.0 };
            let weights = Arc::new(assemble_weights(&grid, params)?);
            let prob = ProblemSpec::from_fields(weights, &zero, &zero, &ExteriorSpec::constant(c))?;
            let res = weak_residual(&DiscreteFunction::constant(grid.clone(), c), &prob)?;
            let (k, m) = res
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bk, bm), (k, r)| {
                    if r.abs() > bm {
                        (k, r.abs())
                    } else {
                        (bk, bm)
                    }
                });
            let node = Some(grid.interior()[k]);
            Ok(Trial {
                error: m / grid.cell_measure(),
                params,
                grid,
                tolerances: Vec::new(),
                node,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = summarize("constant_annihilation", trials, tol);
    r.note("residual divided by the cell measure");
    Ok(r)
}

/// Nonlinear solver at `p = 2` against the dense Cholesky solution.
pub fn p2_equivalence(
    instances: usize,
    max_nodes: usize,
    tol: f64,
    opts: &SolverOptions,
    seed: u64,
) -> Result<CheckReport> {
    let trials = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let params = random_params(&mut rng, 2.0)?;
            let dim = rng.gen_range(1..=2);
            let grid = loop {
                let radius: f64 = rng.gen_range(0.6..1.2);
                let domain = if rng.gen_bool(0.5) {
                    DomainSpec::Ball { radius }
                } else {
                    DomainSpec::Annulus {
                        r_in: 0.3 * radius,
                        r_out: radius,
                    }
                };
                let h = if dim == 1 {
                    2.0 * radius / rng.gen_range(16..200) as f64
                } else {
                    2.0 * radius / rng.gen_range(8..20) as f64
                };
                let grid = build_grid(&domain, dim, h, None)?;
                if grid.len() <= max_nodes {
                    break grid;
                }
            };
            let prob = random_problem(&mut rng, &grid, params)?;
            let solved = solve_dirichlet(&prob, opts)?;
            let exact = linear_solve_p2(&prob)?;
            let (node, err) = solved
                .solution
                .values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |(bk, bm), (k, e)| if e > bm { (k, e) } else { (bk, bm) },
                );
            let err = if solved.converged { err } else { f64::INFINITY };
            Ok(Trial {
                error: err,
                params,
                grid,
                tolerances: vec![solved.tolerance],
                node: Some(node),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize("p2_oracle_equivalence", trials, tol))
}

/// Minimizer by cyclic coordinate descent, each coordinate minimized by golden-section search
/// on its share of the energy. The energy is strictly convex and C¹, so the sweeps converge.
pub fn golden_section_minimizer(prob: &ProblemSpec) -> Vec<f64> {
    let grid = prob.grid();
    let w = prob.weights();
    let p = prob.p();
    let cell = grid.cell_measure();
    let ext = prob.exterior();
    let far = ext.far_field();
    let mut vals: Vec<f64> = (0..grid.len())
        .map(|i| {
            if grid.is_interior(i) {
                0.0
            } else {
                ext.value(i)
            }
        })
        .collect();
    let data = vals.iter().fold(far.abs(), |m, v| m.max(v.abs()));
    let source = grid
        .interior()
        .iter()
        .fold(0.0f64, |m, &i| m.max(prob.g().value(i).abs()));
    let radius = 4.0 * (1.0 + data + source);
    let local = |vals: &[f64], i: usize, v: f64| -> f64 {
        let mut e = 0.0;
        for (j, &u) in vals.iter().enumerate() {
            if j != i {
                e += w.weight(i, j) * (v - u).abs().powf(p);
            }
        }
        e = 2.0 * (e + w.exterior_coefficient(i) * (v - far).abs().powf(p)) / p;
        e + cell * (prob.q().value(i) * v.abs().powf(p) / p - prob.g().value(i) * v)
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let golden = |vals: &[f64], i: usize, mut a: f64, mut b: f64| -> f64 {
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (local(vals, i, c), local(vals, i, d));
        while b - a > 1e-15 * (1.0 + a.abs()) {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = local(vals, i, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = local(vals, i, d);
            }
        }
        0.5 * (a + b)
    };
    // per-coordinate bracket half-widths, shrunk to a multiple of the last move
    let mut widths = vec![radius; grid.len()];
    for _ in 0..20_000 {
        let mut change = 0.0f64;
        for &i in grid.interior() {
            let u = vals[i];
            let mut r = widths[i];
            let v = loop {
                let v = golden(&vals, i, u - r, u + r);
                // a minimizer on the bracket edge may lie outside it
                if (v - u).abs() < 0.99 * r || r >= radius {
                    break v;
                }
                r = (4.0 * r).min(radius);
            };
            widths[i] = (8.0 * (v - u).abs()).max(1e-9 * (1.0 + u.abs()));
            change = change.max((v - u).abs());
            vals[i] = v;
        }
        // golden-section resolves a minimizer only to about sqrt(ε) of the energy scale
        if change < 1e-10 {
            break;
        }
    }
    grid.interior().iter().map(|&i| vals[i]).collect()
}

fn tiny_grid(rng: &mut ChaCha8Rng, max_interior: usize) -> Result<Arc<GridDomain>> {
    loop {
        let grid = match rng.gen_range(0..3) {
            0 => build_grid(
                &DomainSpec::Ball { radius: 1.0 },
                1,
                rng.gen_range(0.34..0.9),
                None,
            )?,
            1 => build_grid(
                &DomainSpec::Ball { radius: 1.0 },
                2,
                rng.gen_range(0.72..0.9),
                None,
            )?,
            _ => {
                let h = rng.gen_range(0.2..0.5);
                let boxes = vec![AxisBox {
                    lo: vec![0.0, 0.0],
                    hi: vec![3.0 * h, 4.0 * h],
                }];
                build_grid(&DomainSpec::CustomMask { boxes }, 2, h, None)?
            }
        };
        if grid.interior().len() <= max_interior {
            return Ok(grid);
        }
    }
}

/// Solver against the coordinate-wise golden-section oracle on grids with few interior nodes.
pub fn tiny_grid_oracle(
    p: f64,
    instances: usize,
    max_interior: usize,
    tol: f64,
    opts: &SolverOptions,
    seed: u64,
) -> Result<CheckReport> {
    let trials = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64);
            let params = random_params(&mut rng, p)?;
            let grid = tiny_grid(&mut rng, max_interior)?;
            let prob = random_problem(&mut rng, &grid, params)?;
            let solved = solve_dirichlet(&prob, opts)?;
            let oracle = golden_section_minimizer(&prob);
            let (slot, err) = prob
                .restrict(&solved.solution)
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |(bk, bm), (k, e)| if e > bm { (k, e) } else { (bk, bm) },
                );
            let err = if solved.converged { err } else { f64::INFINITY };
            let node = Some(grid.interior()[slot]);
            Ok(Trial {
                error: err,
                params,
                grid,
                tolerances: vec![solved.tolerance],
                node,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&format!("tiny_grid_oracle_p{p}"), trials, tol))
}
