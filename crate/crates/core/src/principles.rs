//! Numerical checks of the comparison and maximum principles, the scaling law and
//! the scaling condition on the potential.
//!
//! Every check returns a [`CheckReport`]. Hypothesis flags are recorded, never
//! enforced: a check runs even when the parameters lie outside the range where
//! the continuum statement is proven.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, GridDomain};
use crate::operator::{residual_of, FractionalParams, HypothesisFlags, KernelWeights, ProblemSpec};
use crate::solver::{
    classify_residual, solve_dirichlet, ResidualClass, SolveResult, SolverOptions,
};

/// Strictness thresholds are this multiple of the combined solver tolerance.
pub const THRESHOLD_FACTOR: f64 = 10.0;

/// Default distance of compacts from `∂D`, in grid spacings.
pub const DEFAULT_COMPACT_SPACINGS: f64 = 4.0;

/// Branch of a dichotomy taken by a strong principle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Equal,
    StrictlyAbove,
    Zero,
    Positive,
    /// Neither alternative was resolved above the threshold.
    Undecided,
}

/// Where a margin is attained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<usize>,
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub compact: Option<usize>,
}

impl Witness {
    pub fn at_node(grid: &GridDomain, node: usize) -> Self {
        Self {
            node: Some(node),
            point: grid.node(node)[..grid.dim()].to_vec(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub s: f64,
    pub p: f64,
    pub h: f64,
    #[serde(rename = "R_inf")]
    pub r_inf: f64,
    /// Solver tolerances (residual units) of the solves behind the check.
    pub tolerances: Vec<f64>,
}

impl ReportParams {
    pub fn new(params: &FractionalParams, grid: &GridDomain, tolerances: Vec<f64>) -> Self {
        Self {
            s: params.s(),
            p: params.p(),
            h: grid.h(),
            r_inf: grid.truncation_radius(),
            tolerances,
        }
    }
}

/// Outcome of a single check.
///
/// `holds ⇔ margin ≥ bound`, or `margin > bound` when `strict` is set. For plain
/// inequalities `bound = −tolerance`; strict positivity uses a positive threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub holds: bool,
    pub margin: f64,
    pub bound: f64,
    pub strict: bool,
    pub witness: Option<Witness>,
    pub params: ReportParams,
    pub flags: HypothesisFlags,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub branch: Option<Branch>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_compact: Vec<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(check_id: impl Into<String>, params: ReportParams, flags: HypothesisFlags) -> Self {
        Self {
            check_id: check_id.into(),
            holds: false,
            margin: f64::NEG_INFINITY,
            bound: 0.0,
            strict: false,
            witness: None,
            params,
            flags,
            branch: None,
            per_compact: Vec::new(),
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Sets the margin and bound and derives `holds`.
    pub fn decide(&mut self, margin: f64, bound: f64, strict: bool) {
        self.margin = margin;
        self.bound = bound;
        self.strict = strict;
        self.holds = if strict {
            margin > bound
        } else {
            margin >= bound
        };
    }

    pub fn detail(&mut self, key: &str, value: f64) {
        self.details.insert(key.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Marks the check failed when a solve behind it did not converge.
    fn require_converged(&mut self, label: &str, r: &SolveResult) {
        if !r.converged {
            self.holds = false;
            self.note(format!("solve {label} stopped with status {:?}", r.status));
        }
    }
}

/// Ordering of two problems' data: `A ≥ B` outside `D`, at infinity and in `g`, same `q`.
/// Returns the largest data gap.
pub fn data_gap(a: &ProblemSpec, b: &ProblemSpec) -> Result<f64> {
    let ga = a.grid();
    if !ga.same_lattice(b.grid()) {
        return Err(Error::GridMismatch);
    }
    let (pa, pb) = (a.params(), b.params());
    if pa.s() != pb.s() || pa.p() != pb.p() {
        return Err(Error::DataNotOrdered(
            "problems use different (s, p)".into(),
        ));
    }
    if a.q().values() != b.q().values() {
        return Err(Error::DataNotOrdered("problems use different q".into()));
    }
    let (ea, eb) = (a.exterior(), b.exterior());
    let mut gap = ea.far_field() - eb.far_field();
    if gap < 0.0 {
        return Err(Error::DataNotOrdered(format!(
            "far field {} below {}",
            ea.far_field(),
            eb.far_field()
        )));
    }
    for i in 0..ga.len() {
        let d = if ga.is_interior(i) {
            a.g().value(i) - b.g().value(i)
        } else {
            ea.value(i) - eb.value(i)
        };
        if d < 0.0 {
            let what = if ga.is_interior(i) {
                "source"
            } else {
                "exterior datum"
            };
            return Err(Error::DataNotOrdered(format!(
                "{what} of A below B by {:e} at node {i}",
                -d
            )));
        }
        gap = gap.max(d);
    }
    Ok(gap)
}

/// Minimum of `u_A − u_B` over the nodes selected by `mask` (all nodes when `None`).
pub fn min_difference(
    ua: &DiscreteFunction,
    ub: &DiscreteFunction,
    mask: Option<&[bool]>,
) -> Option<(f64, usize)> {
    ua.values()
        .iter()
        .zip(ub.values())
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(i, (a, b))| (a - b, i))
        .fold(None, |best: Option<(f64, usize)>, (d, i)| match best {
            Some((m, _)) if m <= d => best,
            _ => Some((d, i)),
        })
}

fn solve_pair(
    a: &ProblemSpec,
    b: &ProblemSpec,
    opts: &SolverOptions,
) -> Result<(SolveResult, SolveResult)> {
    let (ra, rb) = rayon::join(|| solve_dirichlet(a, opts), || solve_dirichlet(b, opts));
    Ok((ra?, rb?))
}

/// Weak comparison: ordered data give ordered solutions.
pub fn check_weak_comparison(
    a: &ProblemSpec,
    b: &ProblemSpec,
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let gap = data_gap(a, b)?;
    let (ra, rb) = solve_pair(a, b, opts)?;
    Ok(weak_comparison_report(a, &ra, &rb, gap))
}

/// Weak-comparison report for already computed solutions of ordered problems.
pub fn weak_comparison_report(
    a: &ProblemSpec,
    ra: &SolveResult,
    rb: &SolveResult,
    gap: f64,
) -> CheckReport {
    let grid = a.grid();
    let combined = ra.tolerance + rb.tolerance;
    let mut report = CheckReport::new(
        "weak_comparison",
        ReportParams::new(a.params(), grid, vec![ra.tolerance, rb.tolerance]),
        a.params().flags(),
    );
    let (margin, node) =
        min_difference(&ra.solution, &rb.solution, None).expect("grids are nonempty");
    report.decide(margin, -2.0 * combined, false);
    report.witness = Some(Witness::at_node(grid, node));
    report.detail("data_gap", gap);
    if let Some((m, _)) = min_difference(&ra.solution, &rb.solution, Some(&interior_mask(grid))) {
        report.detail("interior_margin", m);
    }
    report.require_converged("A", ra);
    report.require_converged("B", rb);
    report
}

fn interior_mask(grid: &GridDomain) -> Vec<bool> {
    (0..grid.len()).map(|i| grid.is_interior(i)).collect()
}

/// Splits the interior nodes at distance `≥ d` from `∂D` into lattice-connected components.
pub fn default_compacts(grid: &GridDomain, d: f64) -> Vec<Vec<bool>> {
    let mask = grid.compact_mask(d);
    let mut seen = vec![false; grid.len()];
    let mut out = Vec::new();
    for start in 0..grid.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = vec![false; grid.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp[i] = true;
            let [kx, ky] = grid.lattice_index(i);
            let steps: &[[i64; 2]] = if grid.dim() == 1 {
                &[[1, 0], [-1, 0]]
            } else {
                &[[1, 0], [-1, 0], [0, 1], [0, -1]]
            };
            for s in steps {
                if let Some(j) = grid.node_at([kx + s[0], ky + s[1]]) {
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Strong comparison: ordered data that differ give solutions separated by a positive gap
/// on every compact; identical data give identical solutions.
pub fn check_strong_comparison(
    a: &ProblemSpec,
    b: &ProblemSpec,
    compacts: &[Vec<bool>],
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let gap = data_gap(a, b)?;
    let (ra, rb) = solve_pair(a, b, opts)?;
    strong_comparison_report(a, &ra, &rb, gap, compacts)
}

/// Strong-comparison report for already computed solutions of ordered problems.
pub fn strong_comparison_report(
    a: &ProblemSpec,
    ra: &SolveResult,
    rb: &SolveResult,
    gap: f64,
    compacts: &[Vec<bool>],
) -> Result<CheckReport> {
    let grid = a.grid();
    let combined = ra.tolerance + rb.tolerance;
    let theta = THRESHOLD_FACTOR * combined;
    let mut report = CheckReport::new(
        "strong_comparison",
        ReportParams::new(a.params(), grid, vec![ra.tolerance, rb.tolerance]),
        a.params().flags(),
    );
    report.detail("data_gap", gap);
    report.detail("theta", theta);

    if gap <= theta {
        // identical data: the dichotomy demands the EQUAL branch
        let (diff, node) = ra
            .solution
            .values()
            .iter()
            .zip(rb.solution.values())
            .enumerate()
            .map(|(i, (x, y))| ((x - y).abs(), i))
            .fold((0.0f64, 0usize), |m, c| if c.0 > m.0 { c } else { m });
        report.decide(-diff, -theta, true);
        report.branch = Some(if report.holds {
            Branch::Equal
        } else {
            Branch::Undecided
        });
        report.witness = Some(Witness::at_node(grid, node));
        report.note("data identical within threshold; EQUAL branch expected");
    } else {
        if compacts.iter().all(|c| !c.iter().any(|&m| m)) {
            return Err(Error::BadProblem("no compact contains a node".into()));
        }
        let mut worst: Option<(f64, usize, usize)> = None;
        for (k, mask) in compacts.iter().enumerate() {
            let Some((m, node)) = min_difference(&ra.solution, &rb.solution, Some(mask)) else {
                report.note(format!("compact {k} is empty"));
                continue;
            };
            report.per_compact.push(m);
            if worst.is_none_or(|w| m < w.0) {
                worst = Some((m, node, k));
            }
        }
        let (m, node, k) = worst.expect("at least one compact is nonempty");
        report.decide(m, theta, true);
        report.branch = Some(if report.holds {
            Branch::StrictlyAbove
        } else {
            Branch::Undecided
        });
        let mut w = Witness::at_node(grid, node);
        w.compact = Some(k);
        report.witness = Some(w);
    }
    report.require_converged("A", ra);
    report.require_converged("B", rb);
    Ok(report)
}

/// Strong maximum principle for a nonnegative function `v`: either `v ≡ 0` or `v` is
/// bounded away from zero on every compact. `tol` is the solver tolerance behind `v`.
pub fn check_strong_maximum(
    v: &DiscreteFunction,
    prob: &ProblemSpec,
    compacts: &[Vec<bool>],
    tol: f64,
) -> Result<CheckReport> {
    let grid = prob.grid();
    if !v.grid().same_lattice(grid) {
        return Err(Error::GridMismatch);
    }
    if let Some((node, &value)) = v.values().iter().enumerate().find(|(_, x)| **x < -tol) {
        return Err(Error::NegativeInput { node, value });
    }
    let theta = THRESHOLD_FACTOR * tol;
    let mut report = CheckReport::new(
        "strong_maximum",
        ReportParams::new(prob.params(), grid, vec![tol]),
        prob.params().flags(),
    );
    report.detail("theta", theta);
    let class = classify_residual(v, prob, tol)?;
    report.detail(
        "supersolution",
        f64::from(u8::from(matches!(
            class,
            ResidualClass::Supersolution | ResidualClass::Solution
        ))),
    );
    let sup = v.max_abs();
    if sup < theta {
        report.decide(-sup, -theta, true);
        report.branch = Some(Branch::Zero);
        return Ok(report);
    }
    let mut worst: Option<(f64, usize, usize)> = None;
    for (k, mask) in compacts.iter().enumerate() {
        let m = (0..grid.len())
            .filter(|&i| mask[i])
            .map(|i| (v.value(i), i))
            .fold(None, |b: Option<(f64, usize)>, c| match b {
                Some(x) if x.0 <= c.0 => b,
                _ => Some(c),
            });
        if let Some((m, i)) = m {
            report.per_compact.push(m);
            if worst.is_none_or(|w| m < w.0) {
                worst = Some((m, i, k));
            }
        }
    }
    let (m, node, k) =
        worst.ok_or_else(|| Error::BadProblem("no compact contains a node".into()))?;
    report.decide(m, theta, true);
    report.branch = Some(if report.holds {
        Branch::Positive
    } else {
        Branch::Undecided
    });
    let mut w = Witness::at_node(grid, node);
    w.compact = Some(k);
    report.witness = Some(w);
    Ok(report)
}

/// Solves `prob` and checks the strong maximum principle on its solution.
pub fn check_strong_maximum_solved(
    prob: &ProblemSpec,
    compacts: &[Vec<bool>],
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let r = solve_dirichlet(prob, opts)?;
    let mut report = check_strong_maximum(&r.solution, prob, compacts, r.tolerance)?;
    report.require_converged("v", &r);
    Ok(report)
}

/// Residual of the dilation `v(x) = u(t·x)` measured against the rescaled equation.
#[derive(Clone, Debug)]
pub struct ScalingDiscrepancy {
    /// `max |residual_i| / h^N` over scaled interior nodes at distance `≥ d/t` from the boundary.
    pub discrepancy: f64,
    pub witness: Option<usize>,
    pub nodes: usize,
    /// Whether `t·x` fell off the lattice and interpolation was used.
    pub interpolated: bool,
    pub scaled_grid: Arc<GridDomain>,
}

/// Builds `v(x) = u(t·x)` on the dilated domain `t⁻¹D` with the spacing of `u`, and evaluates
/// the residual of `v` for `(−Δ)^s_p v + t^{sp}q(t·)|v|^{p−2}v = t^{sp}g(t·)`. Only nodes at
/// distance at least `eval_distance/t` from `∂(t⁻¹D)` enter the discrepancy.
pub fn scaling_discrepancy(
    u: &DiscreteFunction,
    prob: &ProblemSpec,
    t: f64,
    eval_distance: f64,
) -> Result<ScalingDiscrepancy> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::BadScaling(t));
    }
    let grid = prob.grid();
    if !u.grid().same_lattice(grid) {
        return Err(Error::GridMismatch);
    }
    let spec = grid.spec().scaled(1.0 / t);
    let build = |r: Option<f64>| {
        let mut b = GridDomain::builder(spec.clone(), grid.dim(), grid.h());
        if let Some(r) = r {
            b = b.truncation_radius(r);
        }
        b.build()
    };
    let scaled = match build(Some(grid.truncation_radius() / t)) {
        Err(Error::TruncationTooSmall { .. }) => build(None)?,
        other => other?,
    };
    let integer = (t - t.round()).abs() < 1e-12;
    let ti = t.round() as i64;
    let at = |f: &DiscreteFunction, i: usize| -> f64 {
        if integer {
            let [a, b] = scaled.lattice_index(i);
            f.lattice_value([ti * a, ti * b])
        } else {
            let x: Vec<f64> = scaled.node(i)[..scaled.dim()]
                .iter()
                .map(|c| t * c)
                .collect();
            f.interpolate(&x)
        }
    };
    let ts = t.powf(prob.params().sp());
    let n = scaled.len();
    let v = DiscreteFunction::new(
        scaled.clone(),
        (0..n).map(|i| at(u, i)).collect(),
        u.far_field(),
    )?;
    let q = DiscreteFunction::new(
        scaled.clone(),
        (0..n).map(|i| ts * at(prob.q(), i)).collect(),
        ts * prob.q().far_field(),
    )?;
    let g = DiscreteFunction::new(
        scaled.clone(),
        (0..n).map(|i| ts * at(prob.g(), i)).collect(),
        ts * prob.g().far_field(),
    )?;
    let ext_vals = (0..n)
        .map(|i| {
            if scaled.is_interior(i) {
                0.0
            } else {
                v.value(i)
            }
        })
        .collect();
    let ext = DiscreteFunction::new(scaled.clone(), ext_vals, u.far_field())?;
    let weights = Arc::new(KernelWeights::assemble(
        &scaled,
        *prob.params(),
        prob.weights().rule(),
    )?);
    let sprob = ProblemSpec::new(weights, q, g, ext)?;
    let res = residual_of(&v, &sprob)?;
    let cell = scaled.cell_measure();
    let cutoff = eval_distance / t;
    let (disc, witness, count) = scaled
        .interior()
        .par_iter()
        .zip(&res)
        .filter(|(&i, _)| scaled.boundary_distance(i) >= cutoff)
        .map(|(&i, r)| ((r / cell).abs(), Some(i), 1usize))
        .reduce(
            || (0.0, None, 0),
            |a, b| {
                let best = if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    (b.0, b.1)
                } else {
                    (a.0, a.1)
                };
                (best.0, best.1, a.2 + b.2)
            },
        );
    Ok(ScalingDiscrepancy {
        discrepancy: disc,
        witness,
        nodes: count,
        interpolated: !integer,
        scaled_grid: scaled,
    })
}

/// Single-level scaling check: holds if the discrepancy does not exceed `tol`.
pub fn check_scaling(
    u: &DiscreteFunction,
    prob: &ProblemSpec,
    t: f64,
    eval_distance: f64,
    tol: f64,
) -> Result<CheckReport> {
    let d = scaling_discrepancy(u, prob, t, eval_distance)?;
    let mut report = CheckReport::new(
        "scaling",
        ReportParams::new(prob.params(), prob.grid(), vec![tol]),
        prob.params().flags(),
    );
    report.decide(-d.discrepancy, -tol, false);
    report.witness = d.witness.map(|i| Witness::at_node(&d.scaled_grid, i));
    report.detail("t", t);
    report.detail("eval_distance", eval_distance);
    report.detail("eval_nodes", d.nodes as f64);
    if d.interpolated {
        report.note("t·x is off the lattice; values interpolated");
    }
    Ok(report)
}

/// Scaling check across nested grids: the discrepancy must shrink by at least
/// `min_ratio` from each level to the next finer one.
pub fn check_scaling_refinement(
    levels: &[(DiscreteFunction, ProblemSpec)],
    t: f64,
    eval_distance: f64,
    min_ratio: f64,
) -> Result<CheckReport> {
    if levels.len() < 2 {
        return Err(Error::BadProblem(
            "refinement study needs at least two levels".into(),
        ));
    }
    let discs = levels
        .iter()
        .map(|(u, prob)| scaling_discrepancy(u, prob, t, eval_distance))
        .collect::<Result<Vec<_>>>()?;
    let (_, finest) = levels.last().expect("nonempty");
    let mut report = CheckReport::new(
        "scaling_refinement",
        ReportParams::new(finest.params(), finest.grid(), Vec::new()),
        finest.params().flags(),
    );
    let mut worst = f64::INFINITY;
    for (k, d) in discs.iter().enumerate() {
        report.detail(&format!("discrepancy_{k}"), d.discrepancy);
        report.detail(&format!("h_{k}"), levels[k].1.grid().h());
        if k > 0 {
            let ratio = discs[k - 1].discrepancy / d.discrepancy;
            report.detail(&format!("ratio_{k}"), ratio);
            worst = worst.min(ratio);
        }
        if d.interpolated {
            report.note(format!("level {k}: values interpolated"));
        }
    }
    report.detail("t", t);
    report.detail("eval_distance", eval_distance);
    report.decide(worst, min_ratio, false);
    let last = discs.last().expect("nonempty");
    report.witness = last.witness.map(|i| Witness::at_node(&last.scaled_grid, i));
    Ok(report)
}

/// Checks `t^{sp}·q(t·x) ≥ q(x)` for interior nodes `x` with `t·x ∈ D`, evaluating `q` exactly.
pub fn check_condition_a2_with<F>(
    q: F,
    grid: &GridDomain,
    s: f64,
    p: f64,
    t_samples: &[f64],
) -> Result<CheckReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let params = FractionalParams::new(s, p)?;
    if let Some(&t) = t_samples.iter().find(|t| !(**t >= 1.0) || !t.is_finite()) {
        return Err(Error::BadScaling(t));
    }
    let dim = grid.dim();
    let geo = grid.geometry();
    let sp = params.sp();
    let mut report = CheckReport::new(
        "condition_a2",
        ReportParams::new(&params, grid, vec![1e-10]),
        params.flags(),
    );
    let worst = grid
        .interior()
        .par_iter()
        .flat_map_iter(|&i| {
            let x = &grid.node(i)[..dim];
            let qx = q(x);
            let geo = &geo;
            let q = &q;
            t_samples.iter().filter_map(move |&t| {
                let tx: Vec<f64> = x.iter().map(|c| t * c).collect();
                geo.contains(&tx).then(|| (t.powf(sp) * q(&tx) - qx, i, t))
            })
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
    let Some((m, node, t)) = worst else {
        report.decide(0.0, -1e-10, false);
        report.note("no sample with t·x inside D");
        return Ok(report);
    };
    report.decide(m, -1e-10, false);
    let mut w = Witness::at_node(grid, node);
    w.t = Some(t);
    report.witness = Some(w);
    report.detail("samples_t", t_samples.len() as f64);
    Ok(report)
}

/// [`check_condition_a2_with`] for nodal `q`, interpolated at `t·x`.
pub fn check_condition_a2(
    q: &DiscreteFunction,
    s: f64,
    p: f64,
    t_samples: &[f64],
) -> Result<CheckReport> {
    if let Some((node, &value)) = q
        .values()
        .iter()
        .enumerate()
        .find(|(i, v)| q.grid().is_interior(*i) && **v < 0.0)
    {
        return Err(Error::NegativeInput { node, value });
    }
    let mut report = check_condition_a2_with(|x| q.interpolate(x), q.grid(), s, p, t_samples)?;
    report.note("q interpolated at t·x");
    Ok(report)
}
