//! Experiment orchestration: builds problems from a [`RunConfig`], runs the requested
//! checks and collects every artifact in memory.

use std::sync::Arc;

use fraclap::geometry::{
    general_ring_experiment, halfspace_experiment, level_set_points, radial_profiles,
    ring_experiment, HalfspaceSetup, RingOutcome, RingSetup,
};
use fraclap::grid::{DiscreteFunction, FieldSpec, GridDomain};
use fraclap::operator::{assemble_weights, ExteriorSpec, KernelWeights, ProblemSpec};
use fraclap::powerlib::{derive_seed, run_inequality_suite, SearchBudget};
use fraclap::principles::{
    check_scaling_refinement, data_gap, default_compacts, strong_comparison_report,
    weak_comparison_report, CheckReport, ReportParams,
};
use fraclap::solver::{solve_dirichlet, SolveResult, SolveStatus, SolverOptions};
use fraclap::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ComparisonMode, RunConfig, Subcommand};
use crate::oracles;
use crate::output::{
    iteration_log_csv, level_sets_csv, radial_profile_csv, solution_csv, weights_csv, Artifact,
};

/// Seed counters of the randomized components, combined with the master seed.
const SOLVER_STREAM: u64 = 0;
const STARSHAPE_STREAM: u64 = 1;
const INEQUALITY_STREAM: u64 = 2;
const COMPARISON_STREAM: u64 = 3;
const ORACLE_STREAM: u64 = 4;

/// Report file name; the report is always the first artifact.
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Also emit the kernel offset table and exterior coefficients.
    pub dump_weights: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub holds: bool,
    pub report: Value,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    /// Exit status: 0 when every check holds, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.holds {
            0
        } else {
            2
        }
    }

    pub fn report_json(&self) -> &[u8] {
        &self.artifacts[0].contents
    }
}

#[derive(Serialize)]
struct SolveSummary {
    status: SolveStatus,
    converged: bool,
    iterations: usize,
    residual_norm: f64,
    tolerance: f64,
    precision_floor: f64,
    energy: f64,
    nodes: usize,
    interior_nodes: usize,
}

impl SolveSummary {
    fn of(r: &SolveResult) -> Self {
        let grid = r.solution.grid();
        Self {
            status: r.status,
            converged: r.converged,
            iterations: r.iterations,
            residual_norm: r.residual_norm,
            tolerance: r.tolerance,
            precision_floor: r.precision_floor,
            energy: r.energy,
            nodes: grid.len(),
            interior_nodes: grid.interior().len(),
        }
    }
}

/// Collects checks, extra report sections and artifacts of one run.
struct Run<'a> {
    cfg: &'a RunConfig,
    opts: RunOptions,
    checks: Vec<CheckReport>,
    sections: Map<String, Value>,
    artifacts: Vec<Artifact>,
    /// Failures that are not expressed by a check, e.g. a solve that did not converge.
    failures: Vec<String>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, opts: RunOptions) -> Self {
        Self {
            cfg,
            opts,
            checks: Vec::new(),
            sections: Map::new(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.cfg.seed, stream)
    }

    fn solver_options(&self) -> SolverOptions {
        let mut o = self.cfg.solver.clone();
        o.seed = derive_seed(self.seed(SOLVER_STREAM), o.seed);
        o
    }

    fn grid(&self, h: f64) -> Result<Arc<GridDomain>> {
        let domain = self.cfg.domain.clone().expect("validated: domain present");
        let mut b = GridDomain::builder(domain, self.cfg.dim, h);
        if let Some(r) = self.cfg.r_inf {
            b = b.truncation_radius(r);
        }
        b.build()
    }

    fn problem(
        &self,
        weights: &Arc<KernelWeights>,
        g: &FieldSpec,
        exterior: &ExteriorSpec,
    ) -> Result<ProblemSpec> {
        ProblemSpec::from_fields(weights.clone(), &self.cfg.q, g, exterior)
    }

    fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents: contents.into(),
        });
    }

    fn record_solve(&mut self, label: &str, r: &SolveResult) {
        if !r.converged {
            self.failures
                .push(format!("solve {label} stopped with status {:?}", r.status));
        }
        let suffix = if label.is_empty() {
            String::new()
        } else {
            format!("_{label}")
        };
        self.add(format!("solution{suffix}.csv"), solution_csv(&r.solution));
        if !r.log.is_empty() {
            self.add(
                format!("iteration_log{suffix}.csv"),
                iteration_log_csv(&r.log),
            );
        }
    }

    fn dump_weights(&mut self, w: &KernelWeights) {
        if self.opts.dump_weights {
            self.add("weights.csv", weights_csv(w));
        }
    }

    fn plot_data(&mut self, u: &DiscreteFunction, levels: &[f64]) {
        let h = u.grid().h();
        let dirs = if u.grid().dim() == 1 { 2 } else { 16 };
        self.add(
            "radial_profile.csv",
            radial_profile_csv(&radial_profiles(u, dirs, 0.5 * h)),
        );
        let sets: Vec<(f64, Vec<Vec<f64>>)> = levels
            .iter()
            .map(|&l| (l, level_set_points(u, l)))
            .collect();
        self.add("level_sets.csv", level_sets_csv(&sets, u.grid().dim()));
    }

    fn solve(&mut self) -> Result<()> {
        let grid = self.grid(self.cfg.h)?;
        let weights = Arc::new(assemble_weights(&grid, self.cfg.params()?)?);
        self.dump_weights(&weights);
        let prob = self.problem(&weights, &self.cfg.g, &self.cfg.exterior)?;
        let r = solve_dirichlet(&prob, &self.solver_options())?;
        let mut check = CheckReport::new(
            "solve_converged",
            ReportParams::new(prob.params(), &grid, vec![r.tolerance]),
            prob.params().flags(),
        );
        check.decide(-r.residual_norm, -r.tolerance, false);
        check.holds &= r.converged;
        self.checks.push(check);
        self.sections
            .insert("solve".into(), to_value(&SolveSummary::of(&r)));
        self.record_solve("", &r);
        self.plot_data(&r.solution, &fraclap::geometry::default_levels());
        Ok(())
    }

    fn inequalities(&mut self) -> Result<()> {
        let c = &self.cfg.inequalities;
        let seed = self.seed(INEQUALITY_STREAM);
        let budget = SearchBudget {
            grid: c.search_grid,
            random: c.search_random,
            seed: derive_seed(seed, u64::MAX),
        };
        let suite = run_inequality_suite(&c.qs, &c.ms, c.samples, seed, &budget)?;
        if !suite.holds {
            self.failures
                .push(format!("{} inequality violations", suite.total_violations));
        }
        self.sections
            .insert("inequalities".into(), to_value(&suite));
        Ok(())
    }

    /// Problem pairs `(A, B)` with data of A above data of B.
    fn comparison_pairs(
        &self,
        weights: &Arc<KernelWeights>,
    ) -> Result<Vec<(ProblemSpec, ProblemSpec)>> {
        let cfg = self.cfg;
        let c = &cfg.comparison;
        if c.random_pairs == 0 {
            let a = self.problem(weights, &cfg.g, &cfg.exterior)?;
            let g = c.lower.g.as_ref().unwrap_or(&cfg.g);
            let ext = c.lower.exterior.as_ref().unwrap_or(&cfg.exterior);
            let b = self.problem(weights, g, ext)?;
            return Ok(vec![(a, b)]);
        }
        let seed = self.seed(COMPARISON_STREAM);
        (0..c.random_pairs)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
                let (hole, outside, source) = (
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(-0.5..0.5),
                );
                let mut gap = || {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(0.0..0.3)
                    }
                };
                let (dh, dout, dg) = (gap(), gap(), gap());
                let ext = |h: f64, o: f64| ExteriorSpec {
                    hole: FieldSpec::Constant { value: h },
                    outside: FieldSpec::Constant { value: o },
                    far_field: o,
                };
                let a = self.problem(
                    weights,
                    &FieldSpec::Constant { value: source },
                    &ext(hole, outside),
                )?;
                let b = self.problem(
                    weights,
                    &FieldSpec::Constant { value: source - dg },
                    &ext(hole - dh, outside - dout),
                )?;
                Ok((a, b))
            })
            .collect()
    }

    fn comparison(&mut self) -> Result<()> {
        let c = self.cfg.comparison.clone();
        let grid = self.grid(self.cfg.h)?;
        let weights = Arc::new(assemble_weights(&grid, self.cfg.params()?)?);
        self.dump_weights(&weights);
        let pairs = self.comparison_pairs(&weights)?;
        let compacts = default_compacts(&grid, c.compact_spacings * grid.h());
        let opts = self.solver_options();
        let single = pairs.len() == 1;
        for (k, (a, b)) in pairs.iter().enumerate() {
            let gap = data_gap(a, b)?;
            let (ra, rb) = rayon::join(|| solve_dirichlet(a, &opts), || solve_dirichlet(b, &opts));
            let (ra, rb) = (ra?, rb?);
            let mut report = match c.mode {
                ComparisonMode::Weak => weak_comparison_report(a, &ra, &rb, gap),
                ComparisonMode::Strong => strong_comparison_report(a, &ra, &rb, gap, &compacts)?,
            };
            if !single {
                report.check_id = format!("{}_pair{k}", report.check_id);
            }
            self.checks.push(report);
            if single {
                self.record_solve("a", &ra);
                self.record_solve("b", &rb);
            } else if !(ra.converged && rb.converged) {
                self.failures
                    .push(format!("pair {k}: a solve did not converge"));
            }
        }
        Ok(())
    }

    fn scaling(&mut self) -> Result<()> {
        let c = self.cfg.scaling.clone();
        let params = self.cfg.params()?;
        let opts = self.solver_options();
        let mut levels = Vec::new();
        for (k, &h) in c.levels.iter().enumerate() {
            let grid = self.grid(h)?;
            let weights = Arc::new(assemble_weights(&grid, params)?);
            let prob = self.problem(&weights, &self.cfg.g, &self.cfg.exterior)?;
            let r = solve_dirichlet(&prob, &opts)?;
            self.record_solve(&format!("level{k}"), &r);
            levels.push((r.solution, prob));
        }
        self.checks.push(check_scaling_refinement(
            &levels,
            c.t,
            c.eval_distance,
            c.min_ratio,
        )?);
        Ok(())
    }

    fn ring_setup(&self) -> Result<RingSetup> {
        Ok(RingSetup {
            domain: self.cfg.domain.clone().expect("validated: domain present"),
            dim: self.cfg.dim,
            h: self.cfg.h,
            r_inf: self.cfg.r_inf,
            params: self.cfg.params()?,
            q: self.cfg.q.clone(),
        })
    }

    fn ring(&mut self, general: bool) -> Result<()> {
        let setup = self.ring_setup()?;
        let mut star = self.cfg.starshape.clone();
        star.seed = derive_seed(self.seed(STARSHAPE_STREAM), star.seed);
        let opts = self.solver_options();
        let outcome: RingOutcome = if general {
            let gen = &self.cfg.general;
            general_ring_experiment(&setup, &self.cfg.g, &gen.b0, &gen.b1, &star, &opts)?
        } else {
            ring_experiment(&setup, &star, &opts)?
        };
        if !outcome.all_hold() {
            if !outcome.starshape.starshaped_holds {
                self.failures.push("superlevel sets not starshaped".into());
            }
            if outcome.starshape.strict.as_ref().is_some_and(|s| !s.holds) {
                self.failures
                    .push("strict starshapedness margin not above threshold".into());
            }
        }
        self.dump_weights(outcome.problem.weights());
        self.checks.extend(outcome.checks.iter().cloned());
        self.sections
            .insert("solve".into(), to_value(&SolveSummary::of(&outcome.solve)));
        self.sections
            .insert("starshape".into(), to_value(&outcome.starshape));
        self.record_solve("", &outcome.solve);
        let star_json = serde_json::to_string_pretty(&outcome.starshape)
            .expect("report types serialize")
            + "\n";
        self.add("starshape.json", star_json);
        self.plot_data(&outcome.solve.solution, &star.levels);
        Ok(())
    }

    fn halfspace(&mut self) -> Result<()> {
        let c = self.cfg.halfspace.clone();
        let setup = HalfspaceSetup {
            length: c.length,
            dim: self.cfg.dim,
            half_width: c.half_width,
            h: self.cfg.h,
            r_inf: self.cfg.r_inf,
            params: self.cfg.params()?,
            q: self.cfg.q.clone(),
            source: c
                .source
                .clone()
                .unwrap_or_else(|| HalfspaceSetup::default_source(c.length, self.cfg.dim)),
            shifts: c.shifts.clone(),
        };
        let outcome = halfspace_experiment(&setup, &self.solver_options())?;
        self.checks.extend(outcome.checks.iter().cloned());
        self.sections.insert(
            "solve".into(),
            json!({
                "trivial": to_value(&SolveSummary::of(&outcome.trivial)),
                "auxiliary": to_value(&SolveSummary::of(&outcome.auxiliary)),
            }),
        );
        self.record_solve("trivial", &outcome.trivial);
        self.record_solve("auxiliary", &outcome.auxiliary);
        Ok(())
    }

    fn oracle_suite(&mut self) -> Result<()> {
        let c = self.cfg.oracle.clone();
        let opts = self.solver_options();
        let seed = self.seed(ORACLE_STREAM);
        let mut stream = 0u64;
        let mut next = || {
            stream += 1;
            derive_seed(seed, stream)
        };
        for &p in &c.gradient_ps {
            let s = next();
            if c.gradient_instances == 0 {
                continue;
            }
            self.checks.push(oracles::gradient_check(
                p,
                c.gradient_instances,
                c.gradient_max_nodes,
                c.gradient_tolerance,
                s,
            )?);
        }
        let s = next();
        if c.constant_grids > 0 {
            self.checks.push(oracles::constant_annihilation(
                c.constant_grids,
                c.constant_tolerance,
                s,
            )?);
        }
        let s = next();
        if c.p2_instances > 0 {
            self.checks.push(oracles::p2_equivalence(
                c.p2_instances,
                c.p2_max_nodes,
                c.p2_tolerance,
                &opts,
                s,
            )?);
        }
        for &p in &c.tiny_ps {
            let s = next();
            if c.tiny_instances == 0 {
                continue;
            }
            self.checks.push(oracles::tiny_grid_oracle(
                p,
                c.tiny_instances,
                c.tiny_max_interior,
                c.tiny_tolerance,
                &opts,
                s,
            )?);
        }
        Ok(())
    }

    fn finish(mut self) -> RunOutput {
        let holds = self.failures.is_empty() && self.checks.iter().all(|c| c.holds);
        let mut report = Map::new();
        report.insert("subcommand".into(), json!(self.cfg.subcommand.name()));
        report.insert("seed".into(), json!(self.cfg.seed));
        report.insert("holds".into(), json!(holds));
        report.insert("failures".into(), json!(self.failures));
        report.insert("checks".into(), to_value(&self.checks));
        report.insert("config".into(), to_value(self.cfg));
        report.append(&mut self.sections);
        let report = Value::Object(report);
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        self.artifacts.insert(
            0,
            Artifact {
                name: REPORT_FILE.into(),
                contents: text.into_bytes(),
            },
        );
        RunOutput {
            holds,
            report,
            artifacts: self.artifacts,
        }
    }
}

/// Runs a validated configuration. Errors carry module-qualified codes.
pub fn execute(cfg: &RunConfig, opts: RunOptions) -> Result<RunOutput> {
    let mut run = Run::new(cfg, opts);
    match cfg.subcommand {
        Subcommand::Solve => run.solve()?,
        Subcommand::CheckInequalities => run.inequalities()?,
        Subcommand::CheckComparison => run.comparison()?,
        Subcommand::CheckScaling => run.scaling()?,
        Subcommand::StarshapeRing => run.ring(false)?,
        Subcommand::StarshapeGeneral => run.ring(true)?,
        Subcommand::Halfspace => run.halfspace()?,
        Subcommand::OracleSuite => run.oracle_suite()?,
    }
    Ok(run.finish())
}
