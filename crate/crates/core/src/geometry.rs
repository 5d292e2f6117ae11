//! Superlevel sets, starshapedness checks and the ring and half-space experiments.
//!
//! Starshapedness of the superlevel sets `U(ℓ) = {u ≥ ℓ}` with respect to the origin is
//! tested through the pointwise criterion `u(t·x) ≤ u(x)` for `t > 1`, evaluated on the
//! multilinear interpolant of the nodal values.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    sample_field, DiscreteFunction, DomainSpec, FarField, FieldSpec, GridDomain, Region,
};
use crate::operator::{assemble_weights, residual_of, ExteriorSpec, FractionalParams, ProblemSpec};
use crate::powerlib::derive_seed;
use crate::principles::{
    check_condition_a2_with, data_gap, default_compacts, strong_comparison_report, CheckReport,
    ReportParams, Witness, THRESHOLD_FACTOR,
};
use crate::solver::{evaluate_candidate, solve_dirichlet, SolveResult, SolverOptions};

pub const DEFAULT_T_SAMPLES: [f64; 5] = [1.1, 1.25, 1.5, 2.0, 4.0];

/// Levels `0.1, 0.2, …, 0.9`.
pub fn default_levels() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// `mask[i] = (u_i ≥ ℓ)`.
pub fn superlevel_mask(u: &DiscreteFunction, level: f64) -> Vec<bool> {
    u.values().iter().map(|v| *v >= level).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StarshapeOptions {
    pub levels: Vec<f64>,
    pub t_samples: Vec<f64>,
    /// Random points of `D` sampled in addition to every node.
    pub random_samples: usize,
    pub seed: u64,
    /// Overrides the measured Lipschitz constant in `ε_geo = C_geo·h`.
    pub c_geo: Option<f64>,
    /// Distance of strict-check samples from `∂D`, in grid spacings.
    pub compact_spacings: f64,
}

impl Default for StarshapeOptions {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            t_samples: DEFAULT_T_SAMPLES.to_vec(),
            random_samples: 256,
            seed: 0,
            c_geo: None,
            compact_spacings: 4.0,
        }
    }
}

impl StarshapeOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::BadOptions(format!(
                "levels must lie in (0,1), got {l}"
            )));
        }
        if self.t_samples.is_empty() {
            return Err(Error::BadOptions("t_samples must not be empty".into()));
        }
        if let Some(t) = self
            .t_samples
            .iter()
            .find(|t| !(**t > 1.0) || !t.is_finite())
        {
            return Err(Error::BadOptions(format!(
                "t_samples must exceed 1, got {t}"
            )));
        }
        if !(self.compact_spacings >= 0.0) {
            return Err(Error::BadOptions(
                "compact_spacings must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    /// `max (ℓ − u(x))` over samples with `u(t·x) ≥ ℓ`; `None` when no sample qualifies.
    pub violation: Option<f64>,
    pub samples: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrictReport {
    /// `min (u(x) − u(t·x))` over the samples.
    pub margin: f64,
    pub threshold: f64,
    pub samples: usize,
    pub holds: bool,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarshapeReport {
    pub levels: Vec<LevelReport>,
    /// `max (u(t·x) − u(x))` over all samples.
    pub violation: f64,
    pub witness: Option<Witness>,
    pub epsilon_geo: f64,
    pub lipschitz: f64,
    /// Half the largest nodal jump: a bound for the interpolation error of a monotone profile.
    pub interpolation_error_estimate: f64,
    pub starshaped_holds: bool,
    pub t_samples: Vec<f64>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strict: Option<StrictReport>,
}

/// Largest difference quotient between lattice neighbours.
pub fn lipschitz_estimate(u: &DiscreteFunction) -> f64 {
    let g = u.grid();
    let mut lip = 0.0f64;
    for i in 0..g.len() {
        let [kx, ky] = g.lattice_index(i);
        for step in [[1, 0], [0, 1]] {
            if let Some(j) = g.node_at([kx + step[0], ky + step[1]]) {
                if j != i {
                    lip = lip.max((u.value(i) - u.value(j)).abs());
                }
            }
        }
    }
    lip / g.h()
}

/// Every node of the block plus `random` points of `D` drawn from a seeded stream.
pub fn sample_points(grid: &GridDomain, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let mut pts: Vec<Vec<f64>> = grid.nodes().map(|x| x[..dim].to_vec()).collect();
    let (lo, hi) = grid.geometry().bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut accepted = 0;
    for _ in 0..random.saturating_mul(100) {
        if accepted == random {
            break;
        }
        let x: Vec<f64> = (0..dim).map(|a| rng.gen_range(lo[a]..hi[a])).collect();
        if grid.geometry().contains(&x) {
            pts.push(x);
            accepted += 1;
        }
    }
    pts
}

fn scale_point(x: &[f64], t: f64) -> Vec<f64> {
    x.iter().map(|c| t * c).collect()
}

fn witness_at(x: &[f64], t: f64) -> Witness {
    Witness {
        point: x.to_vec(),
        t: Some(t),
        ..Default::default()
    }
}

/// Pointwise starshapedness test: `u(t·x) − u(x) ≤ ε_geo` for every sample and every `t`,
/// plus the level-wise form `u(t·x) ≥ ℓ ⇒ u(x) ≥ ℓ − ε_geo`.
pub fn check_starshaped(
    u: &DiscreteFunction,
    t_samples: &[f64],
    x_samples: &[Vec<f64>],
    levels: &[f64],
    epsilon_geo: f64,
) -> StarshapeReport {
    // (x index, t index, u(x), u(t·x))
    let evals: Vec<(usize, usize, f64, f64)> = x_samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, x)| {
            let ux = u.interpolate(x);
            t_samples
                .iter()
                .enumerate()
                .map(move |(m, &t)| (k, m, ux, u.interpolate(&scale_point(x, t))))
        })
        .collect();
    let mut violation = f64::NEG_INFINITY;
    let mut witness = None;
    for &(k, m, ux, utx) in &evals {
        if utx - ux > violation {
            violation = utx - ux;
            witness = Some((k, m));
        }
    }
    let level_reports = levels
        .iter()
        .map(|&level| {
            let mut worst: Option<f64> = None;
            let mut samples = 0;
            for &(_, _, ux, utx) in &evals {
                if utx >= level {
                    samples += 1;
                    let v = level - ux;
                    worst = Some(worst.map_or(v, |w| w.max(v)));
                }
            }
            LevelReport {
                level,
                violation: worst,
                samples,
                holds: worst.is_none_or(|w| w <= epsilon_geo),
            }
        })
        .collect();
    let lipschitz = lipschitz_estimate(u);
    StarshapeReport {
        levels: level_reports,
        violation,
        witness: witness.map(|(k, m)| witness_at(&x_samples[k], t_samples[m])),
        epsilon_geo,
        lipschitz,
        interpolation_error_estimate: 0.5 * lipschitz * u.grid().h(),
        starshaped_holds: violation <= epsilon_geo,
        t_samples: t_samples.to_vec(),
        samples: x_samples.len(),
        strict: None,
    }
}

/// Strict test: `u(x) − u(t·x) > θ` for every sample and every `t`.
pub fn check_strictly_starshaped(
    u: &DiscreteFunction,
    t_samples: &[f64],
    samples: &[Vec<f64>],
    theta: f64,
) -> StrictReport {
    let evals: Vec<(f64, usize, usize)> = samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, x)| {
            let ux = u.interpolate(x);
            t_samples
                .iter()
                .enumerate()
                .map(move |(m, &t)| (ux - u.interpolate(&scale_point(x, t)), k, m))
        })
        .collect();
    let worst = evals
        .iter()
        .fold(None, |b: Option<(f64, usize, usize)>, &c| match b {
            Some(x) if x.0 <= c.0 => b,
            _ => Some(c),
        });
    let margin = worst.map_or(f64::INFINITY, |w| w.0);
    StrictReport {
        margin,
        threshold: theta,
        samples: samples.len(),
        holds: worst.is_some() && margin > theta,
        witness: worst.map(|(_, k, m)| witness_at(&samples[k], t_samples[m])),
    }
}

/// Interior nodes at distance `≥ d` from `∂D` with `lo < u < hi`.
pub fn strict_samples(u: &DiscreteFunction, d: f64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let g = u.grid();
    let mask = g.compact_mask(d);
    (0..g.len())
        .filter(|&i| mask[i] && u.value(i) > lo && u.value(i) < hi)
        .map(|i| g.node(i)[..g.dim()].to_vec())
        .collect()
}

fn ray_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    (0..count)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}

fn block_radius(grid: &GridDomain) -> f64 {
    let dim = grid.dim();
    let lo = grid.lo_index();
    let sh = grid.shape();
    let h = grid.h();
    let mut r2 = 0.0;
    for a in 0..dim {
        let e0 = (lo[a] as f64 * h).abs();
        let e1 = ((lo[a] + sh[a] as i64 - 1) as f64 * h).abs();
        r2 += e0.max(e1).powi(2);
    }
    r2.sqrt() + h
}

/// Direct test of `U(ℓ)` along rays from the origin: once a ray has left `U(ℓ)` it must
/// not re-enter. Returns the largest re-entry excess `u − ℓ` (negative when none occurs).
pub fn ray_violation(u: &DiscreteFunction, level: f64, directions: usize, step: f64) -> f64 {
    let g = u.grid();
    let r_max = block_radius(g);
    let n = (r_max / step).ceil() as usize;
    ray_directions(g.dim(), directions)
        .par_iter()
        .map(|dir| {
            let mut left = false;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..=n {
                let r = k as f64 * step;
                let x: Vec<f64> = dir.iter().map(|c| r * c).collect();
                let v = u.interpolate(&x);
                if v >= level {
                    if left {
                        worst = worst.max(v - level);
                    }
                } else {
                    left = true;
                }
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSample {
    pub theta: f64,
    pub r: f64,
    pub value: f64,
}

/// `u` along `directions` rays from the origin (two rays in one dimension).
pub fn radial_profiles(u: &DiscreteFunction, directions: usize, step: f64) -> Vec<RadialSample> {
    let g = u.grid();
    let r_max = block_radius(g);
    let n = (r_max / step).ceil() as usize;
    let mut out = Vec::new();
    for dir in ray_directions(g.dim(), directions) {
        let theta = if dir.len() == 1 {
            if dir[0] > 0.0 {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            dir[1].atan2(dir[0])
        };
        for k in 0..=n {
            let r = k as f64 * step;
            let x: Vec<f64> = dir.iter().map(|c| r * c).collect();
            out.push(RadialSample {
                theta,
                r,
                value: u.interpolate(&x),
            });
        }
    }
    out
}

/// Points where the piecewise linear interpolant crosses `ℓ` along lattice edges.
pub fn level_set_points(u: &DiscreteFunction, level: f64) -> Vec<Vec<f64>> {
    let g = u.grid();
    let dim = g.dim();
    let mut pts = Vec::new();
    for i in 0..g.len() {
        let [kx, ky] = g.lattice_index(i);
        let steps: &[[i64; 2]] = if dim == 1 {
            &[[1, 0]]
        } else {
            &[[1, 0], [0, 1]]
        };
        for s in steps {
            let Some(j) = g.node_at([kx + s[0], ky + s[1]]) else {
                continue;
            };
            let (a, b) = (u.value(i) - level, u.value(j) - level);
            if (a >= 0.0) != (b >= 0.0) {
                let f = a / (a - b);
                let (xi, xj) = (g.node(i), g.node(j));
                pts.push((0..dim).map(|c| xi[c] + f * (xj[c] - xi[c])).collect());
            }
        }
    }
    pts
}

/// Largest `|u(x) − u(Rx)|` over lattice-preserving reflections `R` fixing the origin.
pub fn symmetry_defect(u: &DiscreteFunction) -> f64 {
    let g = u.grid();
    let maps: Vec<fn([i64; 2]) -> [i64; 2]> = if g.dim() == 1 {
        vec![|k| [-k[0], 0]]
    } else {
        vec![|k| [-k[0], k[1]], |k| [k[0], -k[1]], |k| [k[1], k[0]]]
    };
    let mut worst = 0.0f64;
    for i in 0..g.len() {
        let k = g.lattice_index(i);
        for m in &maps {
            if let Some(j) = g.node_at(m(k)) {
                worst = worst.max((u.value(i) - u.value(j)).abs());
            }
        }
    }
    worst
}

/// Geometry, discretization and potential of a ring experiment.
#[derive(Clone, Debug)]
pub struct RingSetup {
    pub domain: DomainSpec,
    pub dim: usize,
    pub h: f64,
    pub r_inf: Option<f64>,
    pub params: FractionalParams,
    pub q: FieldSpec,
}

impl RingSetup {
    fn grid(&self) -> Result<Arc<GridDomain>> {
        let mut b = GridDomain::builder(self.domain.clone(), self.dim, self.h);
        if let Some(r) = self.r_inf {
            b = b.truncation_radius(r);
        }
        let grid = b.build()?;
        if !grid.geometry().is_ring() {
            return Err(Error::BadGeometry(
                "ring experiments need an annulus or a starshaped ring".into(),
            ));
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug)]
pub struct RingOutcome {
    pub problem: ProblemSpec,
    pub solve: SolveResult,
    pub starshape: StarshapeReport,
    pub checks: Vec<CheckReport>,
}

impl RingOutcome {
    /// Whether the solve converged, every check holds and every level is starshaped.
    pub fn all_hold(&self) -> bool {
        self.solve.converged
            && self.starshape.starshaped_holds
            && self.starshape.strict.as_ref().is_none_or(|s| s.holds)
            && self.checks.iter().all(|c| c.holds)
    }
}

/// Largest increase `b(t·x) − b(x)` of the exterior data along rays, over exterior nodes `x`
/// with `t·x` outside `D`. Zero or less means the data have starshaped superlevel sets.
fn data_starshape_violation(
    grid: &GridDomain,
    hole: &FieldSpec,
    outside: &FieldSpec,
    far: f64,
    ts: &[f64],
) -> f64 {
    let dim = grid.dim();
    let geo = grid.geometry();
    let r_inf = grid.truncation_radius();
    let data = |x: &[f64]| -> Option<f64> {
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() > r_inf {
            return Some(far);
        }
        match geo.classify(x, 0.0) {
            Region::Interior => None,
            Region::Hole => Some(hole.eval(x)),
            Region::Outside => Some(outside.eval(x)),
        }
    };
    (0..grid.len())
        .into_par_iter()
        .filter(|&i| !grid.is_interior(i))
        .map(|i| {
            let x = &grid.node(i)[..dim];
            let Some(bx) = data(x) else {
                return f64::NEG_INFINITY;
            };
            ts.iter()
                .filter_map(|&t| data(&scale_point(x, t)).map(|btx| btx - bx))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn bounds_report(prob: &ProblemSpec, r: &SolveResult) -> CheckReport {
    let grid = prob.grid();
    let mut report = CheckReport::new(
        "bounds_0_1",
        ReportParams::new(prob.params(), grid, vec![r.tolerance]),
        prob.params().flags(),
    );
    let (mut m, mut node) = (f64::INFINITY, 0);
    for (i, v) in r.solution.values().iter().enumerate() {
        let slack = v.min(1.0 - v);
        if slack < m {
            m = slack;
            node = i;
        }
    }
    report.decide(m, -r.tolerance, false);
    report.witness = Some(Witness::at_node(grid, node));
    report
}

fn renamed(mut r: CheckReport, id: &str) -> CheckReport {
    r.check_id = id.to_string();
    r
}

/// Ring problem with data `b₁` on the hole, `b₀` outside and right-hand side `−g`:
/// `(−Δ)^s_p u + q|u|^{p−2}u = −g` in `D`.
pub fn general_ring_experiment(
    setup: &RingSetup,
    g: &FieldSpec,
    b0: &FieldSpec,
    b1: &FieldSpec,
    star: &StarshapeOptions,
    opts: &SolverOptions,
) -> Result<RingOutcome> {
    star.validate()?;
    let grid = setup.grid()?;
    let dim = grid.dim();
    let params = setup.params;
    let sp = params.sp();
    let mut far_point = vec![0.0; dim];
    far_point[0] = 2.0 * grid.truncation_radius();
    let far = b0.eval(&far_point);

    let violation = data_starshape_violation(&grid, b1, b0, far, &star.t_samples);
    if violation > 1e-12 {
        return Err(Error::DataNotStarshaped { violation });
    }

    let mut checks = Vec::new();
    for (name, field) in [("condition_a2_q", &setup.q), ("condition_a2_g", g)] {
        let mut r = renamed(
            check_condition_a2_with(
                |x| field.eval(x),
                &grid,
                params.s(),
                params.p(),
                &star.t_samples,
            )?,
            name,
        );
        if !r.holds {
            r.note("A2_VIOLATED");
        }
        r.detail("sp", sp);
        checks.push(r);
    }

    let weights = Arc::new(assemble_weights(&grid, params)?);
    let q = sample_field(&grid, &setup.q, FarField::Value(0.0))?;
    let rhs = sample_function_neg(&grid, g)?;
    let ext = ExteriorSpec {
        hole: b1.clone(),
        outside: b0.clone(),
        far_field: far,
    }
    .sample(&grid)?;
    let prob = ProblemSpec::new(weights.clone(), q.clone(), rhs, ext)?;
    let solve = solve_dirichlet(&prob, opts)?;
    let u = &solve.solution;
    let tol = solve.tolerance;
    let theta = THRESHOLD_FACTOR * tol;
    checks.push(bounds_report(&prob, &solve));

    // u < 1 through v ≡ 1, which solves the equation with right-hand side q
    let compacts = default_compacts(&grid, star.compact_spacings * grid.h());
    let one = ProblemSpec::new(
        weights.clone(),
        q.clone(),
        q.clone(),
        DiscreteFunction::new(
            grid.clone(),
            (0..grid.len())
                .map(|i| if grid.is_interior(i) { 0.0 } else { 1.0 })
                .collect(),
            1.0,
        )?,
    )?;
    match data_gap(&one, &prob) {
        Ok(gap) => {
            let rv = evaluate_candidate(DiscreteFunction::constant(grid.clone(), 1.0), &one, opts)?;
            checks.push(renamed(
                strong_comparison_report(&one, &rv, &solve, gap, &compacts)?,
                "upper_bound_strict",
            ));
        }
        Err(e) => {
            let mut r = CheckReport::new(
                "upper_bound_strict",
                ReportParams::new(&params, &grid, vec![tol]),
                params.flags(),
            );
            r.note(format!("comparison with v ≡ 1 skipped: {e}"));
            r.decide(0.0, 0.0, false);
            checks.push(r);
        }
    }
    // u > 0 through w ≡ 0
    let zero = ProblemSpec::new(
        weights,
        q,
        DiscreteFunction::constant(grid.clone(), 0.0),
        DiscreteFunction::constant(grid.clone(), 0.0),
    )?;
    match data_gap(&prob, &zero) {
        Ok(gap) => {
            let rw =
                evaluate_candidate(DiscreteFunction::constant(grid.clone(), 0.0), &zero, opts)?;
            checks.push(renamed(
                strong_comparison_report(&prob, &solve, &rw, gap, &compacts)?,
                "lower_bound_strict",
            ));
        }
        Err(e) => {
            let mut r = CheckReport::new(
                "lower_bound_strict",
                ReportParams::new(&params, &grid, vec![tol]),
                params.flags(),
            );
            r.note(format!("comparison with w ≡ 0 skipped: {e}"));
            r.decide(0.0, 0.0, false);
            checks.push(r);
        }
    }

    let lipschitz = lipschitz_estimate(u);
    let eps = star.c_geo.unwrap_or(lipschitz) * grid.h();
    let points = sample_points(&grid, star.random_samples, star.seed);
    let mut starshape = check_starshaped(u, &star.t_samples, &points, &star.levels, eps);

    let interior_vals = grid.interior().iter().map(|&i| u.value(i));
    let (lo, hi) = interior_vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if lo > theta && hi < 1.0 - theta {
        let samples = strict_samples(u, star.compact_spacings * grid.h(), theta, 1.0 - theta);
        starshape.strict = Some(check_strictly_starshaped(
            u,
            &star.t_samples,
            &samples,
            theta,
        ));
    }

    let radial = matches!(
        setup.domain,
        DomainSpec::Ball { .. } | DomainSpec::Annulus { .. }
    ) && [&setup.q, g, b0, b1].iter().all(|f| f.is_radial());
    if radial {
        let defect = symmetry_defect(u);
        let mut r = CheckReport::new(
            "radial_symmetry",
            ReportParams::new(&params, &grid, vec![tol]),
            params.flags(),
        );
        r.decide(-defect, -1e-8, false);
        checks.push(r);
    }
    Ok(RingOutcome {
        problem: prob,
        solve,
        starshape,
        checks,
    })
}

fn sample_function_neg(grid: &Arc<GridDomain>, g: &FieldSpec) -> Result<DiscreteFunction> {
    crate::grid::sample_function(grid, |x| -g.eval(x), FarField::Value(0.0))
}

/// Ring problem `u = 0` outside `D₀`, `u = 1` on `D₁`, `(−Δ)^s_p u + q|u|^{p−2}u = 0` in `D`.
pub fn ring_experiment(
    setup: &RingSetup,
    star: &StarshapeOptions,
    opts: &SolverOptions,
) -> Result<RingOutcome> {
    general_ring_experiment(
        setup,
        &FieldSpec::Constant { value: 0.0 },
        &FieldSpec::Constant { value: 0.0 },
        &FieldSpec::Constant { value: 1.0 },
        star,
        opts,
    )
}

#[derive(Clone, Debug)]
pub struct HalfspaceSetup {
    pub length: f64,
    pub dim: usize,
    pub half_width: f64,
    pub h: f64,
    pub r_inf: Option<f64>,
    pub params: FractionalParams,
    pub q: FieldSpec,
    /// Nonnegative source of the auxiliary solve used by the translation check.
    pub source: FieldSpec,
    /// Translations `t = k·h`.
    pub shifts: Vec<usize>,
}

impl HalfspaceSetup {
    /// Default auxiliary source: a bump of radius `L/8` centred at `x₁ = L/4`.
    pub fn default_source(length: f64, dim: usize) -> FieldSpec {
        let mut center = vec![0.0; dim];
        center[0] = 0.25 * length;
        FieldSpec::Bump {
            center,
            radius: 0.125 * length,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HalfspaceOutcome {
    pub trivial: SolveResult,
    pub auxiliary: SolveResult,
    pub checks: Vec<CheckReport>,
}

impl HalfspaceOutcome {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Checks `q(x + h·e₁) ≥ q(x)` between lattice neighbours.
pub fn check_q_monotone(q: &DiscreteFunction) -> Result<()> {
    let g = q.grid();
    for i in 0..g.len() {
        let [kx, ky] = g.lattice_index(i);
        if let Some(j) = g.node_at([kx + 1, ky]) {
            let (a, b) = (q.value(i), q.value(j));
            if b < a - 1e-14 * (1.0 + a.abs()) {
                return Err(Error::QNotMonotone {
                    lo: g.node(i)[..g.dim()].to_vec(),
                    hi: g.node(j)[..g.dim()].to_vec(),
                });
            }
        }
    }
    Ok(())
}

/// Half-space experiment on the slab `{0 < x₁ < L}` with zero exterior data.
///
/// (i) The homogeneous problem is solved; the solution must vanish to within `10×tol`. (ii) For an auxiliary solution `u` with a source supported in
/// `x₁ ≤ a`, and translates `u_t(x) = u(x + t·e₁)`, the source-free residuals satisfy
/// `R(u) ≥ R(u_t)` on `{x₁ > a}` and the values satisfy `u_t ≤ u` there.
pub fn halfspace_experiment(
    setup: &HalfspaceSetup,
    opts: &SolverOptions,
) -> Result<HalfspaceOutcome> {
    let domain = DomainSpec::HalfspaceSlab {
        length: setup.length,
        half_width: setup.half_width,
    };
    // padding keeps every translate an exact lattice shift of the nodal values
    let pad = setup.shifts.iter().copied().max().unwrap_or(0);
    let mut b = GridDomain::builder(domain, setup.dim, setup.h).padding(pad);
    if let Some(r) = setup.r_inf {
        b = b.truncation_radius(r);
    }
    let grid = b.build()?;
    let params = setup.params;
    let q = sample_field(&grid, &setup.q, FarField::Value(0.0))?;
    check_q_monotone(&q)?;
    let weights = Arc::new(assemble_weights(&grid, params)?);
    let zero = DiscreteFunction::constant(grid.clone(), 0.0);
    let prob = ProblemSpec::new(weights.clone(), q.clone(), zero.clone(), zero.clone())?;
    let mut checks = Vec::new();

    let trivial = solve_dirichlet(&prob, opts)?;
    let mut r = CheckReport::new(
        "halfspace_trivial",
        ReportParams::new(&params, &grid, vec![trivial.tolerance]),
        params.flags(),
    );
    r.decide(
        -trivial.solution.max_abs(),
        -THRESHOLD_FACTOR * trivial.tolerance,
        false,
    );
    r.detail("L", setup.length);
    if !trivial.converged {
        r.holds = false;
        r.note(format!("solve stopped with status {:?}", trivial.status));
    }
    checks.push(r);

    let src = sample_field(&grid, &setup.source, FarField::Value(0.0))?;
    if let Some((node, &value)) = src.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeInput { node, value });
    }
    let support_end = (0..grid.len())
        .filter(|&i| src.value(i) != 0.0)
        .map(|i| grid.node(i)[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let aux_prob = prob.with_g(src)?;
    let auxiliary = solve_dirichlet(&aux_prob, opts)?;
    let u = &auxiliary.solution;
    let tol = auxiliary.tolerance;
    let cell = grid.cell_measure();
    let base = residual_of(u, &prob)?;
    let region: Vec<(usize, usize)> = grid
        .interior()
        .iter()
        .enumerate()
        .filter(|(_, &i)| grid.node(i)[0] > support_end)
        .map(|(k, &i)| (k, i))
        .collect();
    for &k in &setup.shifts {
        let t = k as f64 * grid.h();
        let shifted: Vec<f64> = (0..grid.len())
            .map(|i| {
                let [a, b] = grid.lattice_index(i);
                u.lattice_value([a + k as i64, b])
            })
            .collect();
        let ut = DiscreteFunction::new(grid.clone(), shifted, u.far_field())?;
        let rt = residual_of(&ut, &prob)?;

        let mut res_report = CheckReport::new(
            "halfspace_translation_residual",
            ReportParams::new(&params, &grid, vec![tol]),
            params.flags(),
        );
        let mut ord_report = CheckReport::new(
            "halfspace_translation_order",
            ReportParams::new(&params, &grid, vec![tol]),
            params.flags(),
        );
        let (mut rm, mut rn) = (f64::INFINITY, None);
        let (mut om, mut on) = (f64::INFINITY, None);
        for &(slot, i) in &region {
            let d = (base[slot] - rt[slot]) / cell;
            if d < rm {
                rm = d;
                rn = Some(i);
            }
            let d = u.value(i) - ut.value(i);
            if d < om {
                om = d;
                on = Some(i);
            }
        }
        if region.is_empty() {
            res_report.note("no interior node beyond the source support");
            ord_report.note("no interior node beyond the source support");
            rm = 0.0;
            om = 0.0;
        }
        res_report.decide(rm, -2.0 * tol, false);
        ord_report.decide(om, -2.0 * tol, false);
        for (rep, node) in [(&mut res_report, rn), (&mut ord_report, on)] {
            rep.witness = node.map(|i| Witness::at_node(&grid, i));
            rep.detail("t", t);
            rep.detail("L", setup.length);
            rep.detail("region_start", support_end);
            if !auxiliary.converged {
                rep.holds = false;
                rep.note(format!(
                    "auxiliary solve stopped with status {:?}",
                    auxiliary.status
                ));
            }
        }
        checks.push(res_report);
        checks.push(ord_report);
    }
    Ok(HalfspaceOutcome {
        trivial,
        auxiliary,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, sample_function, RadialProfile};

    fn line(h: f64) -> Arc<GridDomain> {
        build_grid(&DomainSpec::Ball { radius: 1.0 }, 1, h, None).unwrap()
    }

    #[test]
    fn superlevel_examples() {
        let grid = line(0.125);
        let u = sample_function(&grid, |x| 1.0 - x[0].abs(), FarField::Value(0.0)).unwrap();
        assert!(superlevel_mask(&u, 1.5).iter().all(|m| !m));
        assert!(superlevel_mask(&u, -1.0).iter().all(|m| *m));
        let m = superlevel_mask(&u, 0.5);
        for (i, x) in grid.nodes().enumerate() {
            assert_eq!(m[i], x[0].abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn radial_decreasing_is_starshaped() {
        let grid = line(0.0625);
        let u =
            sample_function(&grid, |x| (1.0 - x[0].abs()).max(0.0), FarField::Value(0.0)).unwrap();
        let pts = sample_points(&grid, 50, 1);
        let r = check_starshaped(&u, &DEFAULT_T_SAMPLES, &pts, &default_levels(), 1e-12);
        assert!(r.starshaped_holds, "{}", r.violation);
        assert!(r.levels.iter().all(|l| l.holds));
    }

    #[test]
    fn norm_is_not_starshaped() {
        let grid = line(0.0625);
        let u = sample_function(&grid, |x| x[0].abs(), FarField::Value(1.0)).unwrap();
        let pts = sample_points(&grid, 0, 0);
        let eps = lipschitz_estimate(&u) * grid.h();
        let r = check_starshaped(&u, &DEFAULT_T_SAMPLES, &pts, &default_levels(), eps);
        assert!(!r.starshaped_holds);
        assert!(r.violation > 0.5);
    }

    #[test]
    fn strict_margin_of_hat() {
        let grid = line(0.125);
        let u = sample_function(&grid, |x| 1.0 - x[0].abs(), FarField::Value(0.0)).unwrap();
        let r = check_strictly_starshaped(&u, &[2.0], &[vec![0.25]], 1e-9);
        assert!((r.margin - 0.25).abs() < 1e-15);
        assert!(r.holds);
        let c = DiscreteFunction::constant(grid, 0.5);
        let r = check_strictly_starshaped(&c, &[2.0], &[vec![0.25]], 1e-9);
        assert_eq!(r.margin, 0.0);
        assert!(!r.holds);
    }

    #[test]
    fn ray_test_detects_reentry() {
        let grid = build_grid(&DomainSpec::Ball { radius: 1.0 }, 2, 0.05, None).unwrap();
        let good = sample_function(
            &grid,
            |x| (1.0 - x[0].hypot(x[1])).max(0.0),
            FarField::Value(0.0),
        )
        .unwrap();
        assert!(ray_violation(&good, 0.5, 64, 0.01) <= 0.0);
        let bad = sample_function(
            &grid,
            |x| {
                let r = x[0].hypot(x[1]);
                (1.0 - r)
                    .max(0.0)
                    .max(0.9 * (-(((x[0] - 0.6).powi(2) + x[1] * x[1]) / 0.01)).exp())
            },
            FarField::Value(0.0),
        )
        .unwrap();
        assert!(ray_violation(&bad, 0.5, 64, 0.01) > 0.1);
    }

    #[test]
    fn level_set_points_on_hat() {
        let grid = line(0.1);
        let u = sample_function(&grid, |x| 1.0 - x[0].abs(), FarField::Value(0.0)).unwrap();
        let pts = level_set_points(&u, 0.55);
        assert_eq!(pts.len(), 2);
        for p in pts {
            assert!((p[0].abs() - 0.45).abs() < 1e-12);
        }
    }

    #[test]
    fn annulus_ring_is_symmetric_and_starshaped() {
        let setup = RingSetup {
            domain: DomainSpec::Annulus {
                r_in: 0.25,
                r_out: 1.0,
            },
            dim: 1,
            h: 0.03125,
            r_inf: None,
            params: FractionalParams::new(0.5, 2.0).unwrap(),
            q: FieldSpec::Constant { value: 0.0 },
        };
        let out = ring_experiment(
            &setup,
            &StarshapeOptions::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(out.all_hold(), "{:#?}", out.checks);
        assert!(out.starshape.strict.as_ref().unwrap().holds);
    }

    #[test]
    fn ring_setup_requires_ring() {
        let setup = RingSetup {
            domain: DomainSpec::Ball { radius: 1.0 },
            dim: 1,
            h: 0.125,
            r_inf: None,
            params: FractionalParams::new(0.5, 2.0).unwrap(),
            q: FieldSpec::Constant { value: 0.0 },
        };
        assert!(matches!(
            ring_experiment(
                &setup,
                &StarshapeOptions::default(),
                &SolverOptions::default()
            ),
            Err(Error::BadGeometry(_))
        ));
    }

    #[test]
    fn nonstarshaped_data_rejected() {
        let setup = RingSetup {
            domain: DomainSpec::StarshapedRing {
                inner: RadialProfile::Constant { radius: 0.3 },
                outer: RadialProfile::Constant { radius: 1.0 },
                angular_samples: 64,
            },
            dim: 2,
            h: 0.125,
            r_inf: None,
            params: FractionalParams::new(0.5, 2.0).unwrap(),
            q: FieldSpec::Constant { value: 0.0 },
        };
        let b0 = FieldSpec::RadialPower {
            coefficient: 0.01,
            exponent: 1.0,
        };
        let r = general_ring_experiment(
            &setup,
            &FieldSpec::Constant { value: 0.0 },
            &b0,
            &FieldSpec::Constant { value: 1.0 },
            &StarshapeOptions::default(),
            &SolverOptions::default(),
        );
        assert!(matches!(r, Err(Error::DataNotStarshaped { .. })));
    }

    #[test]
    fn halfspace_rejects_decreasing_q() {
        let setup = HalfspaceSetup {
            length: 4.0,
            dim: 1,
            half_width: 0.0,
            h: 0.25,
            r_inf: None,
            params: FractionalParams::new(0.5, 2.0).unwrap(),
            q: FieldSpec::Affine {
                gradient: vec![-1.0],
                offset: 10.0,
            },
            source: HalfspaceSetup::default_source(4.0, 1),
            shifts: vec![2],
        };
        assert!(matches!(
            halfspace_experiment(&setup, &SolverOptions::default()),
            Err(Error::QNotMonotone { .. })
        ));
    }

    #[test]
    fn halfspace_translation_orders() {
        let setup = HalfspaceSetup {
            length: 4.0,
            dim: 1,
            half_width: 0.0,
            h: 0.0625,
            r_inf: None,
            params: FractionalParams::new(0.5, 2.0).unwrap(),
            q: FieldSpec::Affine {
                gradient: vec![1.0],
                offset: 0.0,
            },
            source: HalfspaceSetup::default_source(4.0, 1),
            shifts: vec![2, 4],
        };
        let out = halfspace_experiment(&setup, &SolverOptions::default()).unwrap();
        assert!(out.all_hold(), "{:#?}", out.checks);
    }
}
