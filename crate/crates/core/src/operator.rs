//! Discretized Gagliardo kernel, energies and the weak residual.
//!
//! A nodal function is read as piecewise constant on the lattice cells of the
//! grid block and as the constant far-field value on every lattice cell outside
//! it. Pair weights therefore depend only on the lattice offset, and the whole
//! exterior of the block enters each row through one coefficient
//! `ext_i = Σ_{j ∉ block, |x_i−x_j| ≤ R} w(x_i−x_j) + h^N·∫_{|y|>R} |y|^{−N−sp} dy`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, FieldSpec, GridDomain, Region};
use crate::powerlib::{increment_bounded_constant, spow};
use crate::quadrature::{tail_integral, unit_cell_kernel_integral};

/// Fractional order `s` and integrability exponent `p`, plus an optional
/// declared Hölder exponent `α` of the solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalParams {
    s: f64,
    p: f64,
    alpha: Option<f64>,
}

/// Which hypotheses of the strong comparison principle hold for given parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// `p > 1/(1−s)`.
    pub p_gt_1_over_1ms: bool,
    /// `α(p−2) > sp−1`, when an exponent `α` was declared.
    pub alpha_condition: Option<bool>,
}

impl FractionalParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::BadParams(format!("s must lie in (0,1), got {s}")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::BadParams(format!("p must exceed 1, got {p}")));
        }
        Ok(Self { s, p, alpha: None })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::BadParams(format!(
                "α must lie in (0,1], got {alpha}"
            )));
        }
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Conjugate exponent `p/(p−1)`.
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn flags(&self) -> HypothesisFlags {
        HypothesisFlags {
            p_gt_1_over_1ms: self.p > 1.0 / (1.0 - self.s),
            alpha_condition: self.alpha.map(|a| a * (self.p - 2.0) > self.sp() - 1.0),
        }
    }
}

/// Treatment of the lattice offsets `0 < |k|_∞ ≤ 1`, where the kernel is near its singularity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearFieldRule {
    /// `h^N·∫_{cell_j} |x_i − y|^{−N−sp} dy` by graded Gauss–Legendre quadrature.
    #[default]
    CellQuadrature,
    /// `h^{2N}/|x_i − x_j|^{N+sp}` like every other offset.
    Midpoint,
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn midpoint_weight(dim: usize, sp: f64, h: f64, dx: i64, dy: i64) -> f64 {
    let k2 = (dx * dx + dy * dy) as f64;
    h.powf(dim as f64 - sp) * k2.powf(-0.5 * (dim as f64 + sp))
}

/// Symmetric translation-invariant pair weights of a grid, with exterior coefficients.
#[derive(Clone, Debug)]
pub struct KernelWeights {
    grid: Arc<GridDomain>,
    params: FractionalParams,
    rule: NearFieldRule,
    /// `w` by absolute offset, indexed `|dx| + nx·|dy|`; the zero offset carries 0.
    table: Vec<f64>,
    exterior: Vec<f64>,
    row_sums: Vec<f64>,
    tail: f64,
    midpoint_outside_block: f64,
}

/// Assembles weights with the default near-field rule.
pub fn assemble_weights(grid: &Arc<GridDomain>, params: FractionalParams) -> Result<KernelWeights> {
    KernelWeights::assemble(grid, params, NearFieldRule::default())
}

impl KernelWeights {
    pub fn assemble(
        grid: &Arc<GridDomain>,
        params: FractionalParams,
        rule: NearFieldRule,
    ) -> Result<Self> {
        let dim = grid.dim();
        let h = grid.h();
        let sp = params.sp();
        let radius = grid.truncation_radius();
        if !(radius > grid.diameter()) {
            return Err(Error::TruncationTooSmall {
                r_inf: radius,
                diameter: grid.diameter(),
            });
        }
        let [nx, ny] = grid.shape();
        let near: Vec<f64> = [[1i64, 0i64], [0, 1], [1, 1]]
            .iter()
            .map(|&k| match rule {
                NearFieldRule::CellQuadrature => {
                    h.powf(dim as f64 - sp) * unit_cell_kernel_integral(dim, sp, k)
                }
                NearFieldRule::Midpoint => midpoint_weight(dim, sp, h, k[0], k[1]),
            })
            .collect();
        let weight_at = |dx: i64, dy: i64| -> f64 {
            match (dx.abs(), dy.abs()) {
                (0, 0) => 0.0,
                (1, 0) => near[0],
                (0, 1) => near[1],
                (1, 1) => near[2],
                (ax, ay) => midpoint_weight(dim, sp, h, ax, ay),
            }
        };
        let mut table = vec![0.0; nx * ny];
        for dy in 0..ny {
            for dx in 0..nx {
                table[dx + nx * dy] = weight_at(dx as i64, dy as i64);
            }
        }

        // lattice sums over 0 < |hk| ≤ R, by quadrant with multiplicities
        let kmax = (radius / h).floor() as i64;
        let r2 = radius * radius;
        let mut lattice = CompensatedSum::default();
        let mut lattice_mid = CompensatedSum::default();
        let ky_max = if dim == 2 { kmax } else { 0 };
        for ky in (0..=ky_max).rev() {
            for kx in (0..=kmax).rev() {
                if kx == 0 && ky == 0 {
                    continue;
                }
                if ((kx * kx + ky * ky) as f64) * h * h > r2 {
                    continue;
                }
                let mult = (if kx > 0 { 2.0 } else { 1.0 }) * (if ky > 0 { 2.0 } else { 1.0 });
                lattice.add(mult * weight_at(kx, ky));
                lattice_mid.add(mult * midpoint_weight(dim, sp, h, kx, ky));
            }
        }
        let lattice = lattice.value();

        // midpoint weights of every offset within the block-offset box
        let mut in_box = CompensatedSum::default();
        for dy in (-(ny as i64 - 1))..(ny as i64) {
            for dx in (-(nx as i64 - 1))..(nx as i64) {
                if dx != 0 || dy != 0 {
                    in_box.add(midpoint_weight(dim, sp, h, dx, dy));
                }
            }
        }
        let midpoint_outside_block = lattice_mid.value() - in_box.value();

        let tail = tail_integral(dim, sp, radius);
        let cell = grid.cell_measure();
        let rows: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let [ix, iy] = grid.local_index(i);
                let mut acc = CompensatedSum::default();
                for jy in 0..ny {
                    let base = nx * jy.abs_diff(iy);
                    for jx in 0..nx {
                        acc.add(table[base + jx.abs_diff(ix)]);
                    }
                }
                let row = acc.value();
                (row, (lattice - row) + cell * tail)
            })
            .collect();
        let (row_sums, exterior) = rows.into_iter().unzip();
        Ok(Self {
            grid: grid.clone(),
            params,
            rule,
            table,
            exterior,
            row_sums,
            tail,
            midpoint_outside_block,
        })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn params(&self) -> &FractionalParams {
        &self.params
    }

    pub fn rule(&self) -> NearFieldRule {
        self.rule
    }

    /// Pair weight `w_ij` (zero on the diagonal).
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let [ix, iy] = self.grid.local_index(i);
        let [jx, jy] = self.grid.local_index(j);
        self.table[ix.abs_diff(jx) + self.grid.shape()[0] * iy.abs_diff(jy)]
    }

    /// Weight by absolute lattice offset, row-major in `(|dx|, |dy|)`.
    pub fn offset_table(&self) -> &[f64] {
        &self.table
    }

    /// Coupling of node `i` to everything outside the grid block.
    pub fn exterior_coefficient(&self, i: usize) -> f64 {
        self.exterior[i]
    }

    pub fn exterior_coefficients(&self) -> &[f64] {
        &self.exterior
    }

    /// `Σ_{j ≠ i} w_ij` over the grid block.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    /// `∫_{|y − x_i| > R_∞} |x_i − y|^{−N−sp} dy`, identical for every node.
    pub fn tail_coefficient(&self) -> f64 {
        self.tail
    }

    /// Iterates `(i, j, w_ij)` over unordered pairs `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.grid.len();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.weight(i, j))))
    }

    fn check_grid(&self, u: &DiscreteFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, u.grid()) || self.grid.same_lattice(u.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Calls `f(j, w_ij)` for every block node `j`.
    #[inline]
    fn for_row<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        let [nx, ny] = self.grid.shape();
        let [ix, iy] = self.grid.local_index(i);
        for jy in 0..ny {
            let row = &self.table[nx * jy.abs_diff(iy)..];
            let start = nx * jy;
            for jx in 0..nx {
                f(start + jx, row[jx.abs_diff(ix)]);
            }
        }
    }
}

/// `Σ_{i≠j} w_ij |u_i − u_j|^p + Σ_i 2·ext_i·|u_i − c|^p` (each unordered pair counted twice).
pub fn gagliardo_energy(u: &DiscreteFunction, w: &KernelWeights, p: f64) -> Result<f64> {
    w.check_grid(u)?;
    let vals = u.values();
    let c = u.far_field();
    let rows: Vec<f64> = (0..vals.len())
        .into_par_iter()
        .map(|i| {
            let ui = vals[i];
            let mut acc = 0.0;
            w.for_row(i, |j, wij| acc += wij * (ui - vals[j]).abs().powf(p));
            acc + 2.0 * w.exterior[i] * (ui - c).abs().powf(p)
        })
        .collect();
    Ok(rows.iter().sum())
}

/// `⟨u, v⟩ = Σ_{i≠j} w_ij (u_i−u_j)^{∗(p−1)} (v_i−v_j) + Σ_i 2·ext_i (u_i−c_u)^{∗(p−1)} (v_i−c_v)`.
pub fn pairing(
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    w: &KernelWeights,
    p: f64,
) -> Result<f64> {
    w.check_grid(u)?;
    w.check_grid(v)?;
    let (uv, vv) = (u.values(), v.values());
    let (cu, cv) = (u.far_field(), v.far_field());
    let rows: Vec<f64> = (0..uv.len())
        .into_par_iter()
        .map(|i| {
            let (ui, vi) = (uv[i], vv[i]);
            let mut acc = 0.0;
            w.for_row(i, |j, wij| {
                acc += wij * spow(ui - uv[j], p - 1.0) * (vi - vv[j])
            });
            acc + 2.0 * w.exterior[i] * spow(ui - cu, p - 1.0) * (vi - cv)
        })
        .collect();
    Ok(rows.iter().sum())
}

/// Exterior data: one field on the hole of a ring, one outside the domain, and
/// the constant beyond the grid block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExteriorSpec {
    #[serde(default = "zero_field")]
    pub hole: FieldSpec,
    #[serde(default = "zero_field")]
    pub outside: FieldSpec,
    #[serde(default)]
    pub far_field: f64,
}

fn zero_field() -> FieldSpec {
    FieldSpec::Constant { value: 0.0 }
}

impl Default for ExteriorSpec {
    fn default() -> Self {
        Self {
            hole: zero_field(),
            outside: zero_field(),
            far_field: 0.0,
        }
    }
}

impl ExteriorSpec {
    pub fn constant(c: f64) -> Self {
        Self {
            hole: FieldSpec::Constant { value: c },
            outside: FieldSpec::Constant { value: c },
            far_field: c,
        }
    }

    /// Nodal exterior data; interior nodes carry 0.
    pub fn sample(&self, grid: &Arc<GridDomain>) -> Result<DiscreteFunction> {
        let values = (0..grid.len())
            .map(|i| match grid.region(i) {
                Region::Interior => 0.0,
                Region::Hole => self.hole.eval(grid.node(i)),
                Region::Outside => self.outside.eval(grid.node(i)),
            })
            .collect();
        DiscreteFunction::new(grid.clone(), values, self.far_field)
    }
}

/// Discrete exterior-value problem `(−Δ)^s_p u + q|u|^{p−2}u = g` in `D`, `u` given outside.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    weights: Arc<KernelWeights>,
    q: DiscreteFunction,
    g: DiscreteFunction,
    exterior: DiscreteFunction,
}

impl ProblemSpec {
    pub fn new(
        weights: Arc<KernelWeights>,
        q: DiscreteFunction,
        g: DiscreteFunction,
        exterior: DiscreteFunction,
    ) -> Result<Self> {
        for f in [&q, &g, &exterior] {
            weights.check_grid(f)?;
        }
        let grid = weights.grid();
        if let Some((i, v)) = q
            .values()
            .iter()
            .enumerate()
            .find(|(i, v)| grid.is_interior(*i) && **v < 0.0)
        {
            return Err(Error::BadProblem(format!(
                "q must be nonnegative, got {v} at node {i}"
            )));
        }
        Ok(Self {
            weights,
            q,
            g,
            exterior,
        })
    }

    /// Samples `q`, `g` and the exterior data from closed-form fields.
    pub fn from_fields(
        weights: Arc<KernelWeights>,
        q: &FieldSpec,
        g: &FieldSpec,
        exterior: &ExteriorSpec,
    ) -> Result<Self> {
        let grid = weights.grid().clone();
        let qf = crate::grid::sample_field(&grid, q, crate::grid::FarField::Value(0.0))?;
        let gf = crate::grid::sample_field(&grid, g, crate::grid::FarField::Value(0.0))?;
        let ef = exterior.sample(&grid)?;
        Self::new(weights, qf, gf, ef)
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        self.weights.grid()
    }

    pub fn params(&self) -> &FractionalParams {
        self.weights.params()
    }

    pub fn p(&self) -> f64 {
        self.weights.params().p()
    }

    pub fn weights(&self) -> &Arc<KernelWeights> {
        &self.weights
    }

    pub fn q(&self) -> &DiscreteFunction {
        &self.q
    }

    pub fn g(&self) -> &DiscreteFunction {
        &self.g
    }

    pub fn exterior(&self) -> &DiscreteFunction {
        &self.exterior
    }

    pub fn with_g(&self, g: DiscreteFunction) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            self.q.clone(),
            g,
            self.exterior.clone(),
        )
    }

    pub fn with_q(&self, q: DiscreteFunction) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            q,
            self.g.clone(),
            self.exterior.clone(),
        )
    }

    pub fn with_exterior(&self, exterior: DiscreteFunction) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            self.q.clone(),
            self.g.clone(),
            exterior,
        )
    }

    /// Node values equal to the exterior data with `interior` written into the interior slots.
    pub fn embed(&self, interior: &[f64]) -> Result<DiscreteFunction> {
        let grid = self.grid();
        if interior.len() != grid.interior().len() {
            return Err(Error::BadGrid(format!(
                "expected {} interior values, got {}",
                grid.interior().len(),
                interior.len()
            )));
        }
        let mut values = self.exterior.values().to_vec();
        for (&i, &v) in grid.interior().iter().zip(interior) {
            values[i] = v;
        }
        DiscreteFunction::new(grid.clone(), values, self.exterior.far_field())
    }

    /// Interior values of `u`, in interior order.
    pub fn restrict(&self, u: &DiscreteFunction) -> Vec<f64> {
        self.grid().interior().iter().map(|&i| u.value(i)).collect()
    }

    /// Jacobi scale `2(Σ_j w_ij + ext_i) + q_i h^N` of each interior row at `p = 2`.
    pub fn diagonal(&self) -> Vec<f64> {
        let cell = self.grid().cell_measure();
        self.grid()
            .interior()
            .iter()
            .map(|&i| {
                2.0 * (self.weights.row_sum(i) + self.weights.exterior_coefficient(i))
                    + self.q.value(i) * cell
            })
            .collect()
    }

    /// Problem-dependent scale `max(1, ‖ext‖_∞, ‖g‖_∞)` used by tolerances.
    pub fn scale(&self) -> f64 {
        let g = self
            .grid()
            .interior()
            .iter()
            .map(|&i| self.g.value(i).abs())
            .fold(0.0, f64::max);
        1f64.max(self.exterior.max_abs()).max(g)
    }

    fn check_exterior(&self, u: &DiscreteFunction) -> Result<()> {
        self.weights.check_grid(u)?;
        let grid = self.grid();
        for i in 0..grid.len() {
            if grid.is_interior(i) {
                continue;
            }
            let e = self.exterior.value(i);
            let dev = (u.value(i) - e).abs();
            if dev > 1e-12 * (1.0 + e.abs()) {
                return Err(Error::ExteriorMismatch {
                    node: i,
                    deviation: dev,
                });
            }
        }
        let e = self.exterior.far_field();
        let dev = (u.far_field() - e).abs();
        if dev > 1e-12 * (1.0 + e.abs()) {
            return Err(Error::ExteriorMismatch {
                node: grid.len(),
                deviation: dev,
            });
        }
        Ok(())
    }
}

/// Energy and residual of the interior rows for node values `vals`.
///
/// The energy omits the constant contributions of exterior–exterior pairs.
pub(crate) fn interior_energy_and_residual(
    prob: &ProblemSpec,
    vals: &[f64],
    far: f64,
    want_energy: bool,
) -> (f64, Vec<f64>) {
    let w = &*prob.weights;
    let grid = prob.grid();
    let p = prob.p();
    let cell = grid.cell_measure();
    let interior = grid.interior();
    let qv = prob.q.values();
    let gv = prob.g.values();
    let mult: Vec<f64> = (0..grid.len())
        .map(|j| if grid.is_interior(j) { 1.0 } else { 2.0 })
        .collect();
    let rows: Vec<(f64, f64)> = interior
        .par_iter()
        .map(|&i| {
            let ui = vals[i];
            let (mut e, mut r) = (0.0, 0.0);
            if p == 2.0 {
                w.for_row(i, |j, wij| {
                    let d = ui - vals[j];
                    r += wij * d;
                    if want_energy {
                        e += mult[j] * wij * d * d;
                    }
                });
            } else if p == 3.0 {
                w.for_row(i, |j, wij| {
                    let d = ui - vals[j];
                    let t = d.abs() * d;
                    r += wij * t;
                    if want_energy {
                        e += mult[j] * wij * t * d;
                    }
                });
            } else {
                w.for_row(i, |j, wij| {
                    let d = ui - vals[j];
                    let a = d.abs();
                    let t = a.powf(p - 1.0);
                    r += wij * t.copysign(d);
                    if want_energy {
                        e += mult[j] * wij * t * a;
                    }
                });
            }
            let dc = ui - far;
            let ext = w.exterior[i];
            let res = 2.0 * r + 2.0 * ext * spow(dc, p - 1.0) + qv[i] * spow(ui, p - 1.0) * cell
                - gv[i] * cell;
            let en = if want_energy {
                (e + 2.0 * ext * dc.abs().powf(p) + qv[i] * ui.abs().powf(p) * cell) / p
                    - gv[i] * ui * cell
            } else {
                0.0
            };
            (en, res)
        })
        .collect();
    let energy = rows.iter().map(|r| r.0).sum();
    (energy, rows.into_iter().map(|r| r.1).collect())
}

/// Energy of the exterior–exterior pairs and exterior rows (independent of interior values).
pub(crate) fn exterior_energy(prob: &ProblemSpec, vals: &[f64], far: f64) -> f64 {
    let w = &*prob.weights;
    let grid = prob.grid();
    let p = prob.p();
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .filter(|&i| !grid.is_interior(i))
        .map(|i| {
            let ui = vals[i];
            let mut acc = 0.0;
            w.for_row(i, |j, wij| {
                if !grid.is_interior(j) {
                    acc += wij * (ui - vals[j]).abs().powf(p);
                }
            });
            acc + 2.0 * w.exterior[i] * (ui - far).abs().powf(p)
        })
        .collect();
    rows.iter().sum::<f64>() / p
}

/// `|a + δ|^p − |a|^p`, accurate relative to the size of the difference when `a` and
/// `a + δ` share a sign.
#[inline]
fn power_difference(a: f64, delta: f64, p: f64) -> f64 {
    if p == 2.0 {
        return delta * (2.0 * a + delta);
    }
    let b = a + delta;
    if a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0) {
        return b.abs().powf(p) - a.abs().powf(p);
    }
    a.abs().powf(p) * (p * (delta / a).ln_1p()).exp_m1()
}

/// Energy change and new residual along a step.
pub(crate) struct StepEval {
    /// `E(u + α·d) − E(u)`.
    pub delta_energy: f64,
    /// Sum of the magnitudes of the per-term energy changes, a rounding scale for `delta_energy`.
    pub change_scale: f64,
    pub residual: Vec<f64>,
    /// Per-row sum of the magnitudes of the residual terms, a rounding scale for `residual`.
    pub residual_scale: Vec<f64>,
}

/// Evaluates `u + α·d` for node values `vals` and node direction `dir` (zero on exterior nodes).
pub(crate) fn step_eval(
    prob: &ProblemSpec,
    vals: &[f64],
    dir: &[f64],
    alpha: f64,
    far: f64,
) -> StepEval {
    let w = &*prob.weights;
    let grid = prob.grid();
    let p = prob.p();
    let cell = grid.cell_measure();
    let qv = prob.q.values();
    let gv = prob.g.values();
    let mult: Vec<f64> = (0..grid.len())
        .map(|j| if grid.is_interior(j) { 1.0 } else { 2.0 })
        .collect();
    let rows: Vec<(f64, f64, f64, f64)> = grid
        .interior()
        .par_iter()
        .map(|&i| {
            let ui = vals[i];
            let di = alpha * dir[i];
            let vi = ui + di;
            let (mut de, mut sc, mut r, mut rs) = (0.0, 0.0, 0.0, 0.0);
            w.for_row(i, |j, wij| {
                let a = ui - vals[j];
                let delta = di - alpha * dir[j];
                let b = a + delta;
                let t = if p == 2.0 {
                    b
                } else if p == 3.0 {
                    b.abs() * b
                } else {
                    b.abs().powf(p - 1.0).copysign(b)
                };
                r += wij * t;
                rs += wij * t.abs();
                let c = mult[j] * wij * power_difference(a, delta, p);
                de += c;
                sc += c.abs();
            });
            let ext = w.exterior[i];
            let (a, b) = (ui - far, vi - far);
            let ce = 2.0 * ext * power_difference(a, di, p);
            let cq = qv[i] * cell * power_difference(ui, di, p);
            let cg = gv[i] * cell * di;
            let (te, tq) = (
                2.0 * ext * spow(b, p - 1.0),
                qv[i] * spow(vi, p - 1.0) * cell,
            );
            let res = 2.0 * r + te + tq - gv[i] * cell;
            let scale = 2.0 * rs + te.abs() + tq.abs() + (gv[i] * cell).abs();
            (
                (de + ce + cq) / p - cg,
                (sc + ce.abs() + cq.abs()) / p + cg.abs(),
                res,
                scale,
            )
        })
        .collect();
    StepEval {
        delta_energy: rows.iter().map(|r| r.0).sum(),
        change_scale: rows.iter().map(|r| r.1).sum(),
        residual: rows.iter().map(|r| r.2).collect(),
        residual_scale: rows.into_iter().map(|r| r.3).collect(),
    }
}

/// Largest residual change, divided by `h^N`, that rounding the node values of `vals`
/// to working precision can cause. For `p < 2` the map `φ` is not Lipschitz at zero, so
/// this floor lies far above machine precision wherever neighbouring values nearly agree.
pub(crate) fn residual_floor(prob: &ProblemSpec, vals: &[f64], far: f64) -> f64 {
    const ROUNDING: f64 = 4.0 * f64::EPSILON;
    let w = &*prob.weights;
    let grid = prob.grid();
    let p = prob.p();
    let cell = grid.cell_measure();
    let qv = prob.q.values();
    let sensitivity = |b: f64, scale: f64| {
        let db = ROUNDING * scale;
        spow(b.abs() + db, p - 1.0) - spow(b.abs(), p - 1.0)
    };
    let worst = grid
        .interior()
        .par_iter()
        .map(|&i| {
            let ui = vals[i];
            let mut r = 0.0;
            w.for_row(i, |j, wij| {
                r += 2.0 * wij * sensitivity(ui - vals[j], ui.abs() + vals[j].abs());
            });
            r += 2.0 * w.exterior[i] * sensitivity(ui - far, ui.abs() + far.abs());
            r += qv[i] * cell * sensitivity(ui, ui.abs());
            r
        })
        .reduce(|| 0.0, f64::max);
    worst / cell
}

/// `A·v` for the `p = 2` stiffness operator on interior vectors (exterior values zero).
pub(crate) fn apply_p2_stiffness(
    prob: &ProblemSpec,
    v: &[f64],
    scratch: &mut Vec<f64>,
) -> Vec<f64> {
    let w = &*prob.weights;
    let grid = prob.grid();
    let cell = grid.cell_measure();
    scratch.clear();
    scratch.resize(grid.len(), 0.0);
    for (&i, &x) in grid.interior().iter().zip(v) {
        scratch[i] = x;
    }
    let full = &*scratch;
    let qv = prob.q.values();
    grid.interior()
        .par_iter()
        .map(|&i| {
            let ui = full[i];
            let mut r = 0.0;
            w.for_row(i, |j, wij| r += wij * (ui - full[j]));
            2.0 * r + 2.0 * w.exterior[i] * ui + qv[i] * ui * cell
        })
        .collect()
}

/// `E(u) = (1/p)·gagliardo + (1/p)·Σ q|u|^p h^N − Σ g u h^N` over the interior.
pub fn total_energy(u: &DiscreteFunction, prob: &ProblemSpec) -> Result<f64> {
    prob.check_exterior(u)?;
    let (e, _) = interior_energy_and_residual(prob, u.values(), u.far_field(), true);
    Ok(e + exterior_energy(prob, u.values(), u.far_field()))
}

/// Gradient of [`total_energy`] with respect to the interior values, in interior order.
pub fn weak_residual(u: &DiscreteFunction, prob: &ProblemSpec) -> Result<Vec<f64>> {
    prob.check_exterior(u)?;
    Ok(interior_energy_and_residual(prob, u.values(), u.far_field(), false).1)
}

/// Weak residual of `u` using its own exterior values instead of the problem's data,
/// as needed to test sub- and supersolutions.
pub fn residual_of(u: &DiscreteFunction, prob: &ProblemSpec) -> Result<Vec<f64>> {
    prob.weights.check_grid(u)?;
    Ok(interior_energy_and_residual(prob, u.values(), u.far_field(), false).1)
}

/// Pointwise operator at interior node `i` from the symmetrized principal-value sum
/// `Σ_{k} w(k)/h^N·[φ(u_i − u(x_i+hk)) + φ(u_i − u(x_i−hk))]` over half of the lattice,
/// with midpoint weights for every offset, scaled like `weak_residual / h^N` (i.e. twice the
/// principal-value integral).
pub fn apply_pointwise(u: &DiscreteFunction, i: usize, w: &KernelWeights) -> Result<f64> {
    w.check_grid(u)?;
    let grid = &*w.grid;
    if i >= grid.len() || !grid.is_interior(i) {
        return Err(Error::NotInterior(i));
    }
    let p = w.params.p();
    let dim = grid.dim();
    let sp = w.params.sp();
    let h = grid.h();
    let cell = grid.cell_measure();
    let [nx, ny] = grid.shape();
    let base = grid.lattice_index(i);
    let ui = u.value(i);
    let c = u.far_field();
    let mut acc = CompensatedSum::default();
    let ky_max = if dim == 2 { ny as i64 - 1 } else { 0 };
    for ky in 0..=ky_max {
        let kx_min = if ky == 0 { 1 } else { -(nx as i64 - 1) };
        for kx in kx_min..(nx as i64) {
            let wk = midpoint_weight(dim, sp, h, kx, ky);
            let plus = u.lattice_value([base[0] + kx, base[1] + ky]);
            let minus = u.lattice_value([base[0] - kx, base[1] - ky]);
            acc.add(wk * (spow(ui - plus, p - 1.0) + spow(ui - minus, p - 1.0)));
        }
    }
    let outside = w.midpoint_outside_block + cell * w.tail;
    acc.add(outside * spow(ui - c, p - 1.0));
    Ok(2.0 * acc.value() / cell)
}

fn check_mask(grid: &GridDomain, mask: &[bool]) -> Result<()> {
    if mask.len() != grid.len() {
        return Err(Error::BadGrid(format!(
            "mask has {} entries for {} nodes",
            mask.len(),
            grid.len()
        )));
    }
    match mask
        .iter()
        .enumerate()
        .find(|(i, m)| **m && grid.is_interior(*i))
    {
        Some((i, _)) => Err(Error::MaskOverlapsInterior(i)),
        None => Ok(()),
    }
}

/// `H_i = 2·Σ_{j∈K} (w_ij/h^N)·[(v_i − v_j − h_j)^{∗(p−1)} − (v_i − v_j)^{∗(p−1)}]`,
/// the change of the operator at `x_i` when `v` is replaced by `v + h·1_K`.
pub fn indicator_perturbation(
    v: &DiscreteFunction,
    h_fn: &DiscreteFunction,
    mask: &[bool],
    i: usize,
    w: &KernelWeights,
) -> Result<f64> {
    w.check_grid(v)?;
    w.check_grid(h_fn)?;
    let grid = &*w.grid;
    check_mask(grid, mask)?;
    if i >= grid.len() || !grid.is_interior(i) {
        return Err(Error::NotInterior(i));
    }
    let q = w.params.p() - 1.0;
    let vi = v.value(i);
    let mut acc = 0.0;
    for (j, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let d = vi - v.value(j);
        acc += w.weight(i, j) * (spow(d - h_fn.value(j), q) - spow(d, q));
    }
    Ok(2.0 * acc / grid.cell_measure())
}

/// Largest deviation, over interior nodes, from the identity
/// `residual(v + h·1_K) = residual(v) + h^N·H`.
pub fn perturbation_identity_defect(
    v: &DiscreteFunction,
    h_fn: &DiscreteFunction,
    mask: &[bool],
    prob: &ProblemSpec,
) -> Result<f64> {
    let grid = prob.grid();
    check_mask(grid, mask)?;
    let shifted: Vec<f64> = (0..grid.len())
        .map(|j| {
            if mask[j] {
                v.value(j) + h_fn.value(j)
            } else {
                v.value(j)
            }
        })
        .collect();
    let shifted = DiscreteFunction::new(grid.clone(), shifted, v.far_field())?;
    let r0 = residual_of(v, prob)?;
    let r1 = residual_of(&shifted, prob)?;
    let cell = grid.cell_measure();
    let mut worst: f64 = 0.0;
    for (k, &i) in grid.interior().iter().enumerate() {
        let hh = indicator_perturbation(v, h_fn, mask, i, prob.weights())?;
        worst = worst.max((r1[k] - r0[k] - cell * hh).abs());
    }
    Ok(worst)
}

/// Outcome of the δ-shift lower bound check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaShiftReport {
    /// `min_i min{H_i(v, −δ1_K), −H_i(v, +δ1_K)}`.
    pub margin: f64,
    /// `C·δ^{p−1}` for `p ≥ 2`, `C·δ` for `p < 2`.
    pub bound: f64,
    pub constant: f64,
    pub witness: usize,
    pub holds: bool,
}

/// Checks that lowering `v` by `δ` on `K` raises the operator in `D` by at least the
/// proof constant (and raising it lowers the operator by as much).
///
/// The constant is `2^{3−p}·#K·min_{i,j} w_ij/h^N` for `p ≥ 2` and
/// `2·C_{2M+1,2}·#K·min_{i,j} w_ij/h^N` for `p < 2`, where `M` bounds `|v|`
/// (taken as `‖v‖_∞` when not supplied).
pub fn delta_shift_margin(
    v: &DiscreteFunction,
    mask: &[bool],
    delta: f64,
    prob: &ProblemSpec,
    m_bound: Option<f64>,
) -> Result<DeltaShiftReport> {
    let grid = prob.grid();
    check_mask(grid, mask)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::BadProblem(format!(
            "δ must lie in [0,1], got {delta}"
        )));
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::BadProblem("mask K is empty".into()));
    }
    let w = prob.weights();
    let cell = grid.cell_measure();
    let p = prob.p();
    let mut min_w = f64::INFINITY;
    for &i in grid.interior() {
        for (j, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            min_w = min_w.min(w.weight(i, j) / cell);
        }
    }
    let (constant, bound) = if p >= 2.0 {
        let c = 2f64.powf(3.0 - p) * count as f64 * min_w;
        (c, c * delta.powf(p - 1.0))
    } else {
        let m = m_bound.unwrap_or_else(|| v.max_abs());
        let c = 2.0 * increment_bounded_constant(p - 1.0, 2.0 * m + 1.0) * count as f64 * min_w;
        (c, c * delta)
    };
    let down = DiscreteFunction::new(grid.clone(), vec![-delta; grid.len()], 0.0)?;
    let up = DiscreteFunction::new(grid.clone(), vec![delta; grid.len()], 0.0)?;
    let mut margin = f64::INFINITY;
    let mut witness = grid.interior()[0];
    for &i in grid.interior() {
        let lower = indicator_perturbation(v, &down, mask, i, w)?;
        let raise = -indicator_perturbation(v, &up, mask, i, w)?;
        let m = lower.min(raise);
        if m < margin {
            margin = m;
            witness = i;
        }
    }
    let holds = margin >= bound - 1e-12 * (1.0 + bound.abs());
    Ok(DeltaShiftReport {
        margin,
        bound,
        constant,
        witness,
        holds,
    })
}
