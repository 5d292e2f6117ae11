//! Energy minimization for the exterior-value problem and a direct `p = 2` oracle.
//!
//! The minimizer is a limited-memory BFGS method preconditioned by the `p = 2`
//! Jacobi diagonal. Line searches compare energy *differences*, evaluated term
//! by term so that they stay accurate long after the total energy has stopped
//! resolving the progress of an iteration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DiscreteFunction;
use crate::operator::{
    apply_p2_stiffness, exterior_energy, interior_energy_and_residual, residual_floor, residual_of,
    step_eval, total_energy, weak_residual, ProblemSpec,
};

/// Smallest supported exponent.
pub const MIN_P: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative tolerance; the solve stops once `max_i |residual_i| / h^N ≤ tolerance·scale`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease parameter.
    pub c1: f64,
    /// Step reduction factor of the backtracking line search.
    pub backtrack: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub seed: u64,
    /// Amplitude (relative to the problem scale) of a seeded random perturbation of the start.
    pub jitter: f64,
    /// Start `p ≠ 2` solves from the solution of the `p = 2` problem.
    pub warm_start: bool,
    pub record_log: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
            c1: 1e-4,
            backtrack: 0.5,
            memory: 10,
            seed: 0,
            jitter: 0.0,
            warm_start: true,
            record_log: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::BadOptions(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::BadOptions(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.memory == 0 {
            return Err(Error::BadOptions("memory must be at least 1".into()));
        }
        if !(self.c1 > 0.0 && self.c1 < 0.5) {
            return Err(Error::BadOptions(format!(
                "c1 must lie in (0, 0.5), got {}",
                self.c1
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::BadOptions(format!(
                "backtrack must lie in (0,1), got {}",
                self.backtrack
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::BadOptions("jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Converged,
    MaxIterationsExceeded,
    /// No step along the search direction decreased the energy.
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    /// `E(u_k) − E(u_{k−1})` as evaluated by the line search.
    pub energy_change: f64,
    pub residual_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solution: DiscreteFunction,
    /// `max_i |residual_i| / h^N`.
    pub residual_norm: f64,
    /// Absolute threshold the residual norm was compared with: the requested tolerance,
    /// raised to `precision_floor` when the solve stalled at the rounding limit.
    pub tolerance: f64,
    /// Residual change attributable to rounding the computed solution to working precision.
    pub precision_floor: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub energy: f64,
    pub log: Vec<IterationRecord>,
}

fn residual_norm(res: &[f64], cell: f64) -> f64 {
    res.iter().fold(0.0f64, |m, r| m.max(r.abs())) / cell
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for the `p = 2` version of `prob`.
fn p2_solution_cg(prob: &ProblemSpec, tol: f64, max_iter: usize) -> Vec<f64> {
    let grid = prob.grid();
    let n = grid.interior().len();
    let cell = grid.cell_measure();
    let diag = prob.diagonal();
    let mut scratch = Vec::new();
    let mut x = vec![0.0; n];
    let mut r = p2_rhs(prob);
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if residual_norm(&r, cell) <= tol {
            break;
        }
        let ad = apply_p2_stiffness(prob, &d, &mut scratch);
        let alpha = rz / dot(&d, &ad);
        for k in 0..n {
            x[k] += alpha * d[k];
            r[k] -= alpha * ad[k];
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            d[k] = z[k] + beta * d[k];
        }
    }
    x
}

/// Right-hand side `b` of the `p = 2` system `A·u = b` on the interior.
fn p2_rhs(prob: &ProblemSpec) -> Vec<f64> {
    let grid = prob.grid();
    let cell = grid.cell_measure();
    let w = prob.weights();
    let ext = prob.exterior();
    let c = ext.far_field();
    grid.interior()
        .iter()
        .map(|&i| {
            let mut rhs = prob.g().value(i) * cell + 2.0 * w.exterior_coefficient(i) * c;
            for j in 0..grid.len() {
                if !grid.is_interior(j) {
                    rhs += 2.0 * w.weight(i, j) * ext.value(j);
                }
            }
            rhs
        })
        .collect()
}

/// Minimizes the discrete energy over the interior values with the exterior data held fixed.
pub fn solve_dirichlet(prob: &ProblemSpec, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let p = prob.p();
    if p < MIN_P {
        return Err(Error::BadOptions(format!(
            "p below supported minimum {MIN_P}"
        )));
    }
    let grid = prob.grid().clone();
    let cell = grid.cell_measure();
    let interior = grid.interior().to_vec();
    let n = interior.len();
    let scale = prob.scale();
    let tol = opts.tolerance * scale;
    let far = prob.exterior().far_field();

    let mut x = if p != 2.0 && opts.warm_start {
        p2_solution_cg(prob, tol, 2000)
    } else {
        vec![0.0; n]
    };
    if opts.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for v in &mut x {
            *v += opts.jitter * scale * rng.gen_range(-1.0..=1.0);
        }
    }
    let mut vals = prob.embed(&x)?.into_values();
    let diag = prob.diagonal();
    let constant = exterior_energy(prob, &vals, far);
    let (mut energy, mut grad) = interior_energy_and_residual(prob, &vals, far, true);
    energy += constant;
    let mut gnorm = residual_norm(&grad, cell);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut log = Vec::new();
    let mut status = SolveStatus::MaxIterationsExceeded;
    let mut iterations = 0;
    let mut dir_full = vec![0.0; grid.len()];

    let mut tolerance = tol;
    while iterations < opts.max_iterations {
        if gnorm <= tolerance {
            status = SolveStatus::Converged;
            break;
        }
        if p < 2.0 && iterations > 0 && iterations % 25 == 0 {
            // for p < 2 the residual cannot be resolved below the rounding floor
            tolerance = tol.max(residual_floor(prob, &vals, far));
            if gnorm <= tolerance {
                status = SolveStatus::Converged;
                break;
            }
        }
        // two-loop recursion with H0 = γ·D⁻¹
        let mut qv = grad.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for k in (0..m).rev() {
            alphas[k] = rho_hist[k] * dot(&s_hist[k], &qv);
            for (q, y) in qv.iter_mut().zip(&y_hist[k]) {
                *q -= alphas[k] * y;
            }
        }
        let gamma = if m > 0 {
            let (s, y) = (&s_hist[m - 1], &y_hist[m - 1]);
            let ydy: f64 = y.iter().zip(&diag).map(|(y, d)| y * y / d).sum();
            dot(s, y) / ydy
        } else {
            1.0
        };
        for (q, d) in qv.iter_mut().zip(&diag) {
            *q *= gamma / d;
        }
        for k in 0..m {
            let beta = rho_hist[k] * dot(&y_hist[k], &qv);
            for (q, s) in qv.iter_mut().zip(&s_hist[k]) {
                *q += (alphas[k] - beta) * s;
            }
        }
        let mut dir: Vec<f64> = qv.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = grad.iter().zip(&diag).map(|(g, d)| -g / d).collect();
            slope = dot(&grad, &dir);
        }
        for (&i, &d) in interior.iter().zip(&dir) {
            dir_full[i] = d;
        }
        let trial = |vals: &[f64], a: f64| -> Vec<f64> {
            vals.iter().zip(&dir_full).map(|(v, d)| v + a * d).collect()
        };

        // backtracking on accurately evaluated energy differences; the first step may expand
        let mut alpha = 1.0;
        let mut accepted = None;
        let expand = s_hist.is_empty();
        for _ in 0..80 {
            let ev = step_eval(prob, &vals, &dir_full, alpha, far);
            let new_slope = dot(&ev.residual, &dir);
            // convexity: E(u + αd) − E(u) ≤ α·⟨∇E(u + αd), d⟩ up to rounding
            let excess = ev.delta_energy - alpha * new_slope;
            let slope_scale: f64 = dir
                .iter()
                .zip(&ev.residual_scale)
                .map(|(d, r)| d.abs() * r)
                .sum();
            let noise = 1e-9 * ev.change_scale + 1e-12 * alpha * slope_scale + f64::MIN_POSITIVE;
            if excess > noise {
                let dnorm: f64 = dir.iter().map(|d| d.abs()).sum();
                let floor = residual_floor(prob, &vals, far).max(residual_floor(
                    prob,
                    &trial(&vals, alpha),
                    far,
                ));
                if excess > noise + 4.0 * alpha * dnorm * floor * cell {
                    return Err(Error::NonconvexDetected { excess });
                }
            }
            let armijo = ev.delta_energy <= opts.c1 * alpha * slope && ev.delta_energy <= 0.0;
            if armijo {
                let grow = expand && new_slope < 0.5 * slope && accepted.is_none();
                accepted = Some((alpha, ev));
                if grow {
                    // keep doubling while the slope stays steep and decrease continues
                    let mut a = alpha;
                    loop {
                        a *= 2.0;
                        let e2 = step_eval(prob, &vals, &dir_full, a, far);
                        let s2 = dot(&e2.residual, &dir);
                        let (_, best) = accepted.as_ref().expect("set above");
                        if e2.delta_energy <= opts.c1 * a * slope
                            && e2.delta_energy <= best.delta_energy
                        {
                            let steep = s2 < 0.5 * slope;
                            accepted = Some((a, e2));
                            if !steep || a > 1e12 {
                                break;
                            }
                        } else {
                            break;
                        }
                    }
                }
                break;
            }
            alpha *= opts.backtrack;
        }
        let Some((alpha, ev)) = accepted else {
            if !s_hist.is_empty() {
                // retry once from a preconditioned steepest-descent direction
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            status = SolveStatus::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = ev.residual.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for (k, &i) in interior.iter().enumerate() {
            x[k] += s[k];
            vals[i] = x[k];
        }
        energy += ev.delta_energy;
        grad = ev.residual;
        gnorm = residual_norm(&grad, cell);
        iterations += 1;
        if sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }
        if opts.record_log {
            log.push(IterationRecord {
                iteration: iterations,
                energy,
                energy_change: ev.delta_energy,
                residual_norm: gnorm,
                step: alpha,
            });
        }
    }
    let precision_floor = residual_floor(prob, &vals, far);
    if status != SolveStatus::Converged {
        // at the rounding limit no representable step can improve the residual further
        let limit = if p < 2.0 || status == SolveStatus::LineSearchFailed {
            tol.max(precision_floor)
        } else {
            tol
        };
        if gnorm <= limit {
            status = SolveStatus::Converged;
            tolerance = limit;
        }
    }
    let solution = prob.embed(&x)?;
    let energy = total_energy(&solution, prob)?;
    Ok(SolveResult {
        solution,
        residual_norm: gnorm,
        tolerance,
        precision_floor,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        energy,
        log,
    })
}

/// Packages a known candidate `u` (for instance an exact constant solution) as a solve
/// result, with its measured residual compared against the tolerance of `opts`.
pub fn evaluate_candidate(
    u: DiscreteFunction,
    prob: &ProblemSpec,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let res = weak_residual(&u, prob)?;
    let gnorm = residual_norm(&res, prob.grid().cell_measure());
    let tolerance = opts.tolerance * prob.scale();
    let converged = gnorm <= tolerance;
    let energy = total_energy(&u, prob)?;
    let precision_floor = residual_floor(prob, u.values(), u.far_field());
    Ok(SolveResult {
        solution: u,
        residual_norm: gnorm,
        tolerance,
        precision_floor,
        iterations: 0,
        converged,
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterationsExceeded
        },
        energy,
        log: Vec::new(),
    })
}

/// Solves the `p = 2` problem by a dense Cholesky factorization of the stiffness matrix.
pub fn linear_solve_p2(prob: &ProblemSpec) -> Result<DiscreteFunction> {
    if prob.p() != 2.0 {
        return Err(Error::NotP2(prob.p()));
    }
    let grid = prob.grid();
    let interior = grid.interior();
    let n = interior.len();
    let w = prob.weights();
    let diag = prob.diagonal();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (r, &i) in interior.iter().enumerate() {
        a[(r, r)] = diag[r];
        for (col, &j) in interior.iter().enumerate() {
            if j != i {
                a[(r, col)] = -2.0 * w.weight(i, j);
            }
        }
    }
    let b = DVector::from_vec(p2_rhs(prob));
    let chol = a.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(&b);
    prob.embed(x.as_slice())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResidualClass {
    Solution,
    Supersolution,
    Subsolution,
    Neither,
}

/// Tests the residual of `u` (with its own exterior values) against the nonnegative
/// nodal cone: supersolution iff `residual_i / h^N ≥ −tol` at every interior node.
pub fn classify_residual(
    u: &DiscreteFunction,
    prob: &ProblemSpec,
    tol: f64,
) -> Result<ResidualClass> {
    let res = residual_of(u, prob)?;
    let cell = prob.grid().cell_measure();
    let sup = res.iter().all(|r| r / cell >= -tol);
    let sub = res.iter().all(|r| r / cell <= tol);
    Ok(match (sup, sub) {
        (true, true) => ResidualClass::Solution,
        (true, false) => ResidualClass::Supersolution,
        (false, true) => ResidualClass::Subsolution,
        (false, false) => ResidualClass::Neither,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, FieldSpec};
    use crate::operator::{assemble_weights, ExteriorSpec, FractionalParams};
    use std::sync::Arc;

    fn annulus_problem(
        s: f64,
        p: f64,
        h: f64,
        q: FieldSpec,
        g: FieldSpec,
        ext: ExteriorSpec,
    ) -> ProblemSpec {
        let grid = build_grid(
            &DomainSpec::Annulus {
                r_in: 0.25,
                r_out: 1.0,
            },
            1,
            h,
            None,
        )
        .unwrap();
        let w = Arc::new(assemble_weights(&grid, FractionalParams::new(s, p).unwrap()).unwrap());
        ProblemSpec::from_fields(w, &q, &g, &ext).unwrap()
    }

    fn zero() -> FieldSpec {
        FieldSpec::Constant { value: 0.0 }
    }

    #[test]
    fn zero_data_gives_zero() {
        for p in [1.5, 2.0, 3.0] {
            let prob = annulus_problem(
                0.5,
                p,
                0.0625,
                FieldSpec::Constant { value: 1.0 },
                zero(),
                ExteriorSpec::default(),
            );
            let r = solve_dirichlet(&prob, &SolverOptions::default()).unwrap();
            assert!(r.converged);
            assert!(r.solution.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn constant_data_reproduced() {
        for p in [1.5, 2.0, 3.0] {
            let prob = annulus_problem(0.5, p, 0.0625, zero(), zero(), ExteriorSpec::constant(0.7));
            let r = solve_dirichlet(
                &prob,
                &SolverOptions {
                    record_log: true,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(
                r.converged,
                "p = {p}: {:?} {} {} {}",
                r.status, r.iterations, r.residual_norm, r.tolerance
            );
            assert!(
                r.solution.values().iter().all(|v| (v - 0.7).abs() < 1e-8),
                "p = {p}"
            );
        }
    }

    #[test]
    fn matches_linear_oracle() {
        let ext = ExteriorSpec {
            hole: FieldSpec::Constant { value: 1.0 },
            ..Default::default()
        };
        let prob = annulus_problem(
            0.3,
            2.0,
            0.03125,
            zero(),
            FieldSpec::Constant { value: 0.5 },
            ext,
        );
        let r = solve_dirichlet(&prob, &SolverOptions::default()).unwrap();
        assert!(r.converged);
        let oracle = linear_solve_p2(&prob).unwrap();
        let diff = r
            .solution
            .values()
            .iter()
            .zip(oracle.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-8, "{diff}");
        let res = weak_residual(&oracle, &prob).unwrap();
        assert!(res.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn energy_decreases_monotonically() {
        let ext = ExteriorSpec {
            hole: FieldSpec::Constant { value: 1.0 },
            ..Default::default()
        };
        let prob = annulus_problem(0.5, 3.0, 0.03125, zero(), zero(), ext);
        let opts = SolverOptions {
            record_log: true,
            warm_start: false,
            ..Default::default()
        };
        let r = solve_dirichlet(&prob, &opts).unwrap();
        assert!(r.converged);
        assert!(r.log.iter().all(|rec| rec.energy_change <= 0.0));
    }

    #[test]
    fn single_interior_node_closed_form() {
        let spec = DomainSpec::CustomMask {
            boxes: vec![crate::grid::AxisBox {
                lo: vec![0.0],
                hi: vec![1.0],
            }],
        };
        let grid = build_grid(&spec, 1, 0.5, None).unwrap();
        let w =
            Arc::new(assemble_weights(&grid, FractionalParams::new(0.5, 2.0).unwrap()).unwrap());
        let prob = ProblemSpec::from_fields(
            w.clone(),
            &FieldSpec::Constant { value: 2.0 },
            &FieldSpec::Constant { value: 3.0 },
            &ExteriorSpec::default(),
        )
        .unwrap();
        let u = linear_solve_p2(&prob).unwrap();
        let cell = grid.cell_measure();
        let expected =
            3.0 * cell / (2.0 * w.row_sum(1) + 2.0 * w.exterior_coefficient(1) + 2.0 * cell);
        assert!((u.value(1) - expected).abs() < 1e-15);
    }

    #[test]
    fn not_p2_rejected() {
        let prob = annulus_problem(0.5, 3.0, 0.125, zero(), zero(), ExteriorSpec::default());
        assert_eq!(linear_solve_p2(&prob).unwrap_err(), Error::NotP2(3.0));
    }

    #[test]
    fn p_below_minimum_rejected() {
        let prob = annulus_problem(0.5, 1.02, 0.125, zero(), zero(), ExteriorSpec::default());
        assert!(matches!(
            solve_dirichlet(&prob, &SolverOptions::default()),
            Err(Error::BadOptions(_))
        ));
    }

    #[test]
    fn classification_examples() {
        let prob = annulus_problem(
            0.5,
            2.0,
            0.0625,
            FieldSpec::Constant { value: 1.0 },
            FieldSpec::Constant { value: -1.0 },
            ExteriorSpec::default(),
        );
        let c = DiscreteFunction::constant(prob.grid().clone(), 1.0);
        assert_eq!(
            classify_residual(&c, &prob, 1e-12).unwrap(),
            ResidualClass::Supersolution
        );
        let prob = prob
            .with_g(DiscreteFunction::constant(prob.grid().clone(), 1.0))
            .unwrap();
        let z = DiscreteFunction::constant(prob.grid().clone(), 0.0);
        assert_eq!(
            classify_residual(&z, &prob, 1e-12).unwrap(),
            ResidualClass::Subsolution
        );
        let sol = solve_dirichlet(&prob, &SolverOptions::default()).unwrap();
        assert_eq!(
            classify_residual(&sol.solution, &prob, sol.tolerance).unwrap(),
            ResidualClass::Solution
        );
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions {
            tolerance: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolverOptions {
            max_iterations: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolverOptions::default().validate().is_ok());
    }
}
