//! Lattice grids, domain geometry and nodal functions.
//!
//! A [`GridDomain`] is the rectangular block of lattice points `h·ℤ^N` that covers
//! the outer domain `D₀`, each node tagged with a [`NodeRole`]. Everything outside
//! the block is represented by a single far-field constant carried by each
//! [`DiscreteFunction`].

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Nodes within `BOUNDARY_EPS·h` of `∂D` are treated as lying on the boundary.
pub const BOUNDARY_EPS: f64 = 1e-12;
pub const DEFAULT_ANGULAR_SAMPLES: usize = 720;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeRole {
    Interior,
    ExteriorFixed,
    /// Beyond the truncation radius. Grids whose block fits inside the
    /// truncation ball (all grids built here) never carry this role.
    FarFieldBoundary,
}

/// Where a point sits relative to the ring structure `D = D₀ \ D̄₁`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    /// `D̄₁`, the closed hole of a ring (empty for non-ring domains).
    Hole,
    /// `ℝ^N \ D₀`, including `∂D₀`.
    Outside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    Constant {
        radius: f64,
    },
    /// `base + amplitude·cos(frequency·θ + phase)`
    Cosine {
        base: f64,
        amplitude: f64,
        frequency: u32,
        #[serde(default)]
        phase: f64,
    },
}

impl RadialProfile {
    /// The profile of the dilated boundary `factor·Γ`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            RadialProfile::Constant { radius } => RadialProfile::Constant {
                radius: factor * radius,
            },
            RadialProfile::Cosine {
                base,
                amplitude,
                frequency,
                phase,
            } => RadialProfile::Cosine {
                base: factor * base,
                amplitude: factor * amplitude,
                frequency,
                phase,
            },
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            RadialProfile::Constant { radius } => radius,
            RadialProfile::Cosine {
                base,
                amplitude,
                frequency,
                phase,
            } => base + amplitude * (f64::from(frequency) * theta + phase).cos(),
        }
    }
}

/// A boundary radius sampled at uniform angles, linearly interpolated and periodic in θ.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialFunction {
    samples: Vec<f64>,
}

impl RadialFunction {
    pub fn sample(profile: &RadialProfile, n: usize) -> Self {
        let samples = (0..n)
            .map(|k| profile.eval(2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.samples.len();
        let t = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
        let k = (t.floor() as usize).min(n - 1);
        let frac = t - k as f64;
        let a = self.samples[k];
        let b = self.samples[(k + 1) % n];
        a + frac * (b - a)
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn vertex(&self, k: usize) -> Point {
        let n = self.samples.len();
        let theta = 2.0 * PI * (k % n) as f64 / n as f64;
        let r = self.samples[k % n];
        [r * theta.cos(), r * theta.sin()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn default_angular_samples() -> usize {
    DEFAULT_ANGULAR_SAMPLES
}

/// Parametric description of the open set `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        radius: f64,
    },
    Annulus {
        r_in: f64,
        r_out: f64,
    },
    /// `D = {ρ₁(θ) < |x| < ρ₀(θ)}`.
    StarshapedRing {
        inner: RadialProfile,
        outer: RadialProfile,
        #[serde(default = "default_angular_samples")]
        angular_samples: usize,
    },
    /// `{0 < x₁ < length}`, truncated to `|x₂| < half_width` in two dimensions.
    HalfspaceSlab {
        length: f64,
        #[serde(default)]
        half_width: f64,
    },
    /// Union of open axis-aligned boxes.
    CustomMask {
        boxes: Vec<AxisBox>,
    },
}

impl DomainSpec {
    /// The dilated domain `factor·D`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            DomainSpec::Ball { radius } => DomainSpec::Ball {
                radius: factor * radius,
            },
            DomainSpec::Annulus { r_in, r_out } => DomainSpec::Annulus {
                r_in: factor * r_in,
                r_out: factor * r_out,
            },
            DomainSpec::StarshapedRing {
                inner,
                outer,
                angular_samples,
            } => DomainSpec::StarshapedRing {
                inner: inner.scaled(factor),
                outer: outer.scaled(factor),
                angular_samples: *angular_samples,
            },
            DomainSpec::HalfspaceSlab { length, half_width } => DomainSpec::HalfspaceSlab {
                length: factor * length,
                half_width: factor * half_width,
            },
            DomainSpec::CustomMask { boxes } => DomainSpec::CustomMask {
                boxes: boxes
                    .iter()
                    .map(|b| AxisBox {
                        lo: b.lo.iter().map(|v| factor * v).collect(),
                        hi: b.hi.iter().map(|v| factor * v).collect(),
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Ball {
        radius: f64,
    },
    Ring {
        inner: RadialFunction,
        outer: RadialFunction,
    },
    Slab {
        length: f64,
        half_width: f64,
    },
    Custom {
        boxes: Vec<AxisBox>,
    },
}

/// Resolved geometry of a [`DomainSpec`] in a fixed dimension.
#[derive(Clone, Debug)]
pub struct Geometry {
    dim: usize,
    shape: Shape,
}

fn polar(x: &[f64]) -> (f64, f64) {
    if x.len() == 1 {
        let theta = if x[0] >= 0.0 { 0.0 } else { PI };
        (x[0].abs(), theta)
    } else {
        (x[0].hypot(x[1]), x[1].atan2(x[0]))
    }
}

fn segment_distance(x: &[f64], a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x[0] - a[0] - t * dx).hypot(x[1] - a[1] - t * dy)
}

impl Geometry {
    pub fn new(spec: &DomainSpec, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::BadGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        let shape = match spec {
            DomainSpec::Ball { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::BadGeometry("ball radius must be positive".into()));
                }
                Shape::Ball { radius: *radius }
            }
            DomainSpec::Annulus { r_in, r_out } => {
                if !(*r_in > 0.0 && r_in < r_out) {
                    return Err(Error::BadGeometry(format!(
                        "annulus needs 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"
                    )));
                }
                Shape::Ring {
                    inner: RadialFunction {
                        samples: vec![*r_in],
                    },
                    outer: RadialFunction {
                        samples: vec![*r_out],
                    },
                }
            }
            DomainSpec::StarshapedRing {
                inner,
                outer,
                angular_samples,
            } => {
                if *angular_samples < 4 {
                    return Err(Error::BadGeometry("need at least 4 angular samples".into()));
                }
                let inner = RadialFunction::sample(inner, *angular_samples);
                let outer = RadialFunction::sample(outer, *angular_samples);
                for (k, (r1, r0)) in inner.samples.iter().zip(&outer.samples).enumerate() {
                    if !(*r1 > 0.0 && r1 < r0) {
                        return Err(Error::BadGeometry(format!(
                            "need 0 < ρ₁ < ρ₀ at every angle; sample {k} has ρ₁ = {r1}, ρ₀ = {r0}"
                        )));
                    }
                }
                Shape::Ring { inner, outer }
            }
            DomainSpec::HalfspaceSlab { length, half_width } => {
                if !(*length > 0.0) || (dim == 2 && !(*half_width > 0.0)) {
                    return Err(Error::BadGeometry("slab extents must be positive".into()));
                }
                Shape::Slab {
                    length: *length,
                    half_width: *half_width,
                }
            }
            DomainSpec::CustomMask { boxes } => {
                if boxes.is_empty() {
                    return Err(Error::BadGeometry(
                        "custom mask needs at least one box".into(),
                    ));
                }
                for b in boxes {
                    if b.lo.len() != dim
                        || b.hi.len() != dim
                        || b.lo.iter().zip(&b.hi).any(|(l, h)| !(l < h))
                    {
                        return Err(Error::BadGeometry(format!("malformed box {b:?}")));
                    }
                }
                Shape::Custom {
                    boxes: boxes.clone(),
                }
            }
        };
        Ok(Self { dim, shape })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the domain is a ring `D₀ \ D̄₁` with a hole around the origin.
    pub fn is_ring(&self) -> bool {
        matches!(self.shape, Shape::Ring { .. })
    }

    /// Classifies `x`; points within `eps` of `∂D` are never interior.
    pub fn classify(&self, x: &[f64], eps: f64) -> Region {
        match &self.shape {
            Shape::Ball { radius } => {
                let (r, _) = polar(x);
                if r < radius - eps {
                    Region::Interior
                } else {
                    Region::Outside
                }
            }
            Shape::Ring { inner, outer } => {
                let (r, theta) = polar(x);
                if r <= inner.eval(theta) + eps {
                    Region::Hole
                } else if r < outer.eval(theta) - eps {
                    Region::Interior
                } else {
                    Region::Outside
                }
            }
            Shape::Slab { length, half_width } => {
                let inside_x = x[0] > eps && x[0] < length - eps;
                let inside_y = self.dim == 1 || x[1].abs() < half_width - eps;
                if inside_x && inside_y {
                    Region::Interior
                } else {
                    Region::Outside
                }
            }
            Shape::Custom { boxes } => {
                let inside = boxes
                    .iter()
                    .any(|b| (0..self.dim).all(|a| x[a] > b.lo[a] + eps && x[a] < b.hi[a] - eps));
                if inside {
                    Region::Interior
                } else {
                    Region::Outside
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.classify(x, 0.0) == Region::Interior
    }

    /// Euclidean distance from `x` to `∂D` (exact for balls, annuli and slabs,
    /// polyline approximation for sampled radial boundaries, a lower bound for
    /// unions of boxes).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => (polar(x).0 - radius).abs(),
            Shape::Ring { inner, outer } => {
                if self.dim == 1 {
                    [inner, outer]
                        .iter()
                        .flat_map(|f| [f.eval(0.0), -f.eval(PI)])
                        .map(|b| (x[0] - b).abs())
                        .fold(f64::INFINITY, f64::min)
                } else if inner.samples.len() == 1 {
                    let r = polar(x).0;
                    (r - inner.samples[0])
                        .abs()
                        .min((r - outer.samples[0]).abs())
                } else {
                    let mut best = f64::INFINITY;
                    for f in [inner, outer] {
                        let n = f.samples.len();
                        for k in 0..n {
                            best = best.min(segment_distance(x, f.vertex(k), f.vertex(k + 1)));
                        }
                    }
                    best
                }
            }
            Shape::Slab { length, half_width } => {
                let mut d = x[0].abs().min((length - x[0]).abs());
                if self.dim == 2 {
                    d = d.min((half_width - x[1].abs()).abs());
                }
                d
            }
            Shape::Custom { boxes } => boxes
                .iter()
                .filter(|b| (0..self.dim).all(|a| x[a] > b.lo[a] && x[a] < b.hi[a]))
                .map(|b| {
                    (0..self.dim)
                        .map(|a| (x[a] - b.lo[a]).min(b.hi[a] - x[a]))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max),
        }
    }

    /// Axis-aligned bounding box of the outer domain `D₀`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        match &self.shape {
            Shape::Ball { radius } => (vec![-radius; d], vec![*radius; d]),
            Shape::Ring { outer, .. } => {
                let r = outer.max();
                (vec![-r; d], vec![r; d])
            }
            Shape::Slab { length, half_width } => {
                if d == 1 {
                    (vec![0.0], vec![*length])
                } else {
                    (vec![0.0, -half_width], vec![*length, *half_width])
                }
            }
            Shape::Custom { boxes } => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for b in boxes {
                    for a in 0..d {
                        lo[a] = lo[a].min(b.lo[a]);
                        hi[a] = hi[a].max(b.hi[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter()
            .zip(&hi)
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform lattice block covering `D₀` with classified nodes.
#[derive(Clone, Debug)]
pub struct GridDomain {
    dim: usize,
    h: f64,
    lo_index: [i64; 2],
    shape: [usize; 2],
    nodes: Vec<Point>,
    roles: Vec<NodeRole>,
    regions: Vec<Region>,
    interior: Vec<usize>,
    slots: Vec<Option<usize>>,
    boundary_distance: Vec<f64>,
    truncation_radius: f64,
    geometry: Geometry,
    spec: DomainSpec,
}

/// Builder for [`GridDomain`]; `padding` adds extra exterior layers around `D₀`.
#[derive(Clone, Debug)]
pub struct GridBuilder {
    spec: DomainSpec,
    dim: usize,
    h: f64,
    truncation_radius: Option<f64>,
    padding: usize,
}

impl GridBuilder {
    pub fn truncation_radius(mut self, r_inf: f64) -> Self {
        self.truncation_radius = Some(r_inf);
        self
    }

    pub fn padding(mut self, cells: usize) -> Self {
        self.padding = cells;
        self
    }

    pub fn build(self) -> Result<Arc<GridDomain>> {
        GridDomain::construct(self).map(Arc::new)
    }
}

/// Builds a grid with the default truncation radius when `r_inf` is `None`.
pub fn build_grid(
    spec: &DomainSpec,
    dim: usize,
    h: f64,
    r_inf: Option<f64>,
) -> Result<Arc<GridDomain>> {
    let mut b = GridDomain::builder(spec.clone(), dim, h);
    if let Some(r) = r_inf {
        b = b.truncation_radius(r);
    }
    b.build()
}

impl GridDomain {
    pub fn builder(spec: DomainSpec, dim: usize, h: f64) -> GridBuilder {
        GridBuilder {
            spec,
            dim,
            h,
            truncation_radius: None,
            padding: 0,
        }
    }

    fn construct(b: GridBuilder) -> Result<Self> {
        if !(b.h > 0.0) || !b.h.is_finite() {
            return Err(Error::BadGrid(format!(
                "spacing must be positive, got {}",
                b.h
            )));
        }
        let geometry = Geometry::new(&b.spec, b.dim)?;
        let (lo, hi) = geometry.bounding_box();
        let h = b.h;
        let pad = b.padding as i64;
        let mut lo_index = [0i64; 2];
        let mut shape = [1usize; 2];
        for a in 0..b.dim {
            let i0 = (lo[a] / h + 1e-9).floor() as i64 - pad;
            let i1 = (hi[a] / h - 1e-9).ceil() as i64 + pad;
            lo_index[a] = i0;
            shape[a] = (i1 - i0 + 1) as usize;
        }
        let n = shape[0] * shape[1];
        if n > 200_000 {
            return Err(Error::BadGrid(format!(
                "grid with {n} nodes exceeds the supported size"
            )));
        }

        let mut nodes = Vec::with_capacity(n);
        let mut roles = Vec::with_capacity(n);
        let mut regions = Vec::with_capacity(n);
        let mut interior = Vec::new();
        let mut slots = Vec::with_capacity(n);
        for iy in 0..shape[1] {
            for ix in 0..shape[0] {
                let x = [
                    (lo_index[0] + ix as i64) as f64 * h,
                    if b.dim == 2 {
                        (lo_index[1] + iy as i64) as f64 * h
                    } else {
                        0.0
                    },
                ];
                let region = geometry.classify(&x[..b.dim], BOUNDARY_EPS * h);
                let idx = nodes.len();
                if region == Region::Interior {
                    slots.push(Some(interior.len()));
                    interior.push(idx);
                    roles.push(NodeRole::Interior);
                } else {
                    slots.push(None);
                    roles.push(NodeRole::ExteriorFixed);
                }
                regions.push(region);
                nodes.push(x);
            }
        }
        if interior.is_empty() {
            return Err(Error::EmptyInterior);
        }

        let diameter = h
            * (0..b.dim)
                .map(|a| ((shape[a] - 1) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
        let truncation_radius = match b.truncation_radius {
            Some(r) => r,
            None => (8.0 * geometry.diameter()).max(2.0 * diameter),
        };
        if !(truncation_radius >= 2.0 * diameter) {
            return Err(Error::TruncationTooSmall {
                r_inf: truncation_radius,
                diameter: 2.0 * diameter,
            });
        }
        let boundary_distance = nodes
            .iter()
            .zip(&roles)
            .map(|(x, role)| match role {
                NodeRole::Interior => geometry.distance_to_boundary(&x[..b.dim]),
                _ => 0.0,
            })
            .collect();

        Ok(Self {
            dim: b.dim,
            h,
            lo_index,
            shape,
            nodes,
            roles,
            regions,
            interior,
            slots,
            boundary_distance,
            truncation_radius,
            geometry,
            spec: b.spec,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Measure of one lattice cell, `h^N`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes per axis (the second entry is 1 in one dimension).
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn lo_index(&self) -> [i64; 2] {
        self.lo_index
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.nodes.iter().map(move |x| &x[..self.dim])
    }

    pub fn role(&self, i: usize) -> NodeRole {
        self.roles[i]
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn region(&self, i: usize) -> Region {
        self.regions[i]
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.roles[i] == NodeRole::Interior
    }

    /// Node indices of the interior, in node order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Position of node `i` within [`GridDomain::interior`].
    pub fn interior_slot(&self, i: usize) -> Option<usize> {
        self.slots[i]
    }

    pub fn boundary_distance(&self, i: usize) -> f64 {
        self.boundary_distance[i]
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    /// Diameter of the convex hull of the nodes.
    pub fn diameter(&self) -> f64 {
        self.h
            * (0..self.dim)
                .map(|a| ((self.shape[a] - 1) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
    }

    /// Per-axis position of node `i` inside the block.
    pub fn local_index(&self, i: usize) -> [usize; 2] {
        [i % self.shape[0], i / self.shape[0]]
    }

    pub fn lattice_index(&self, i: usize) -> [i64; 2] {
        let [ix, iy] = self.local_index(i);
        [self.lo_index[0] + ix as i64, self.lo_index[1] + iy as i64]
    }

    /// Node carrying lattice index `idx`, if it lies inside the block.
    pub fn node_at(&self, idx: [i64; 2]) -> Option<usize> {
        let ix = idx[0] - self.lo_index[0];
        let iy = idx[1] - self.lo_index[1];
        if ix < 0 || iy < 0 || ix as usize >= self.shape[0] || iy as usize >= self.shape[1] {
            return None;
        }
        Some(ix as usize + self.shape[0] * iy as usize)
    }

    /// Interior nodes at distance at least `d` from `∂D`.
    pub fn compact_mask(&self, d: f64) -> Vec<bool> {
        (0..self.len())
            .map(|i| self.is_interior(i) && self.boundary_distance[i] >= d - BOUNDARY_EPS * self.h)
            .collect()
    }

    /// Same lattice block with the same node roles.
    pub fn same_lattice(&self, other: &GridDomain) -> bool {
        self.dim == other.dim
            && self.h == other.h
            && self.lo_index == other.lo_index
            && self.shape == other.shape
            && self.roles == other.roles
    }
}

/// Closed-form scalar fields used for coefficients, sources and exterior data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `gradient·x + offset`
    Affine {
        gradient: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `coefficient·|x|^exponent`
    RadialPower {
        #[serde(default = "one")]
        coefficient: f64,
        exponent: f64,
    },
    /// `amplitude·exp(−|x|²/width²)`
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// `amplitude·max(0, 1 − |x|/radius)`
    RadialHat {
        amplitude: f64,
        radius: f64,
    },
    /// Smooth compactly supported bump around `center`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    /// Whether the field depends on `|x|` only.
    pub fn is_radial(&self) -> bool {
        match self {
            FieldSpec::Affine { gradient, .. } => gradient.iter().all(|g| *g == 0.0),
            FieldSpec::Bump { center, .. } => center.iter().all(|c| *c == 0.0),
            _ => true,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm = || x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::Affine { gradient, offset } => {
                offset + gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
            }
            FieldSpec::RadialPower {
                coefficient,
                exponent,
            } => coefficient * norm().powf(*exponent),
            FieldSpec::Gaussian { amplitude, width } => {
                amplitude * (-x.iter().map(|v| v * v).sum::<f64>() / (width * width)).exp()
            }
            FieldSpec::RadialHat { amplitude, radius } => {
                amplitude * (1.0 - norm() / radius).max(0.0)
            }
            FieldSpec::Bump {
                center,
                radius,
                amplitude,
            } => {
                let r2 = x
                    .iter()
                    .enumerate()
                    .map(|(a, v)| (v - center.get(a).copied().unwrap_or(0.0)).powi(2))
                    .sum::<f64>()
                    / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the constant beyond the grid block is chosen when sampling a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FarField {
    Value(f64),
    /// Evaluate the field at `(2·R_∞, 0)`.
    Evaluate,
}

/// Nodal values on a grid plus the constant taken outside the grid block.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    grid: Arc<GridDomain>,
    values: Vec<f64>,
    far_field: f64,
}

impl DiscreteFunction {
    pub fn new(grid: Arc<GridDomain>, values: Vec<f64>, far_field: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::BadGrid(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { node, value });
        }
        if !far_field.is_finite() {
            return Err(Error::NonFiniteValue {
                node: usize::MAX,
                value: far_field,
            });
        }
        Ok(Self {
            grid,
            values,
            far_field,
        })
    }

    pub fn constant(grid: Arc<GridDomain>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self {
            grid,
            values,
            far_field: c,
        }
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn far_field(&self) -> f64 {
        self.far_field
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value of the piecewise representation at a lattice index (far field off the block).
    pub fn lattice_value(&self, idx: [i64; 2]) -> f64 {
        self.grid
            .node_at(idx)
            .map_or(self.far_field, |i| self.values[i])
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(self.far_field.abs(), |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation inside the node hull; the far-field value elsewhere.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &*self.grid;
        let dim = g.dim;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..dim {
            let t = x[a] / g.h - g.lo_index[a] as f64;
            let n = g.shape[a];
            let slack = 1e-12 * (1.0 + t.abs());
            if t < -slack || t > (n - 1) as f64 + slack {
                return self.far_field;
            }
            let t = t.clamp(0.0, (n - 1) as f64);
            if n == 1 {
                base[a] = 0;
                frac[a] = 0.0;
                continue;
            }
            let k = (t.floor() as usize).min(n - 2);
            base[a] = k;
            frac[a] = t - k as f64;
        }
        let nx = g.shape[0];
        let at = |ix: usize, iy: usize| self.values[ix + nx * iy];
        if dim == 1 {
            let v0 = at(base[0], 0);
            if frac[0] == 0.0 {
                return v0;
            }
            let v1 = at(base[0] + 1, 0);
            v0 + frac[0] * (v1 - v0)
        } else {
            let (fx, fy) = (frac[0], frac[1]);
            let ix1 = (base[0] + 1).min(nx - 1);
            let iy1 = (base[1] + 1).min(g.shape[1] - 1);
            let v00 = at(base[0], base[1]);
            let v10 = at(ix1, base[1]);
            let v01 = at(base[0], iy1);
            let v11 = at(ix1, iy1);
            (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
        }
    }
}

/// Samples `f` at every node.
pub fn sample_function<F>(grid: &Arc<GridDomain>, f: F, far: FarField) -> Result<DiscreteFunction>
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<f64> = grid.nodes().map(&f).collect();
    let far_field = match far {
        FarField::Value(c) => c,
        FarField::Evaluate => {
            let mut p = vec![0.0; grid.dim()];
            p[0] = 2.0 * grid.truncation_radius();
            f(&p)
        }
    };
    DiscreteFunction::new(grid.clone(), values, far_field)
}

/// Samples a closed-form field.
pub fn sample_field(
    grid: &Arc<GridDomain>,
    field: &FieldSpec,
    far: FarField,
) -> Result<DiscreteFunction> {
    sample_function(grid, |x| field.eval(x), far)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus() -> DomainSpec {
        DomainSpec::Annulus {
            r_in: 0.25,
            r_out: 1.0,
        }
    }

    #[test]
    fn annulus_1d_interior_nodes() {
        let g = build_grid(&annulus(), 1, 0.25, None).unwrap();
        let xs: Vec<f64> = g.interior().iter().map(|&i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![-0.75, -0.5, 0.5, 0.75]);
        assert_eq!(g.region(g.node_at([0, 0]).unwrap()), Region::Hole);
        assert_eq!(g.region(g.node_at([1, 0]).unwrap()), Region::Hole);
        assert_eq!(g.region(g.node_at([4, 0]).unwrap()), Region::Outside);
    }

    #[test]
    fn ball_2d_interior_nodes() {
        // lattice points with |x| < 1 at h = 0.5: the full 3×3 block around the origin
        let g = build_grid(&DomainSpec::Ball { radius: 1.0 }, 2, 0.5, None).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.interior().len(), 9);
        for &i in g.interior() {
            let x = g.node(i);
            assert!(x[0].hypot(x[1]) < 1.0);
        }
        // (±1, 0) lie exactly on the boundary
        let on_boundary = g.node_at([2, 0]).unwrap();
        assert_eq!(g.role(on_boundary), NodeRole::ExteriorFixed);
    }

    #[test]
    fn inverted_ring_is_rejected() {
        let spec = DomainSpec::StarshapedRing {
            inner: RadialProfile::Constant { radius: 1.0 },
            outer: RadialProfile::Constant { radius: 0.5 },
            angular_samples: DEFAULT_ANGULAR_SAMPLES,
        };
        assert!(matches!(
            build_grid(&spec, 2, 0.1, None),
            Err(Error::BadGeometry(_))
        ));
    }

    #[test]
    fn empty_interior_is_reported() {
        let spec = DomainSpec::Ball { radius: 0.1 };
        let g = GridDomain::builder(spec, 1, 1.0).build();
        // the origin is a node and lies inside
        assert!(g.is_ok());
        let spec = DomainSpec::CustomMask {
            boxes: vec![AxisBox {
                lo: vec![0.1],
                hi: vec![0.2],
            }],
        };
        assert_eq!(
            build_grid(&spec, 1, 1.0, None).unwrap_err(),
            Error::EmptyInterior
        );
    }

    #[test]
    fn truncation_radius_checked() {
        let err = build_grid(&annulus(), 1, 0.25, Some(1.0)).unwrap_err();
        assert!(matches!(err, Error::TruncationTooSmall { .. }));
        let g = build_grid(&annulus(), 1, 0.25, None).unwrap();
        assert!(g.truncation_radius() >= 2.0 * g.diameter());
    }

    #[test]
    fn roles_partition_nodes() {
        for h in [0.3, 0.2, 0.1] {
            let g = build_grid(&annulus(), 2, h, None).unwrap();
            let interior = g
                .roles()
                .iter()
                .filter(|r| **r == NodeRole::Interior)
                .count();
            let exterior = g
                .roles()
                .iter()
                .filter(|r| **r == NodeRole::ExteriorFixed)
                .count();
            assert_eq!(interior + exterior, g.len());
            assert_eq!(interior, g.interior().len());
        }
    }

    #[test]
    fn refinement_increases_interior() {
        let spec = DomainSpec::StarshapedRing {
            inner: RadialProfile::Constant { radius: 0.3 },
            outer: RadialProfile::Cosine {
                base: 1.0,
                amplitude: 0.2,
                frequency: 3,
                phase: 0.0,
            },
            angular_samples: DEFAULT_ANGULAR_SAMPLES,
        };
        let mut last = 0;
        for h in [0.2, 0.1, 0.05] {
            let n = build_grid(&spec, 2, h, None).unwrap().interior().len();
            assert!(n > last);
            last = n;
        }
    }

    #[test]
    fn sampling_and_far_field() {
        let g = build_grid(&DomainSpec::Ball { radius: 1.0 }, 1, 0.5, None).unwrap();
        let one = sample_function(&g, |_| 1.0, FarField::Evaluate).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        assert_eq!(one.far_field(), 1.0);
        let lin = sample_function(&g, |x| x[0], FarField::Value(0.0)).unwrap();
        assert_eq!(lin.values(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn singular_sample_is_rejected() {
        let g = build_grid(&DomainSpec::Ball { radius: 1.0 }, 1, 0.5, None).unwrap();
        let err = sample_function(&g, |x| 1.0 / (x[0] - 0.5), FarField::Value(0.0)).unwrap_err();
        assert_eq!(
            err,
            Error::NonFiniteValue {
                node: 3,
                value: f64::INFINITY
            }
        );
    }

    #[test]
    fn interpolation_examples() {
        let g = build_grid(&DomainSpec::Ball { radius: 1.0 }, 1, 0.5, None).unwrap();
        let lin = sample_function(&g, |x| x[0], FarField::Value(0.0)).unwrap();
        assert!((lin.interpolate(&[0.3]) - 0.3).abs() < 1e-15);
        assert_eq!(lin.interpolate(&[0.5]), 0.5);
        let sq = sample_function(&g, |x| x[0] * x[0], FarField::Value(0.0)).unwrap();
        assert!((sq.interpolate(&[0.25]) - 0.125).abs() < 1e-15);
        assert_eq!(sq.interpolate(&[5.0]), 0.0);
    }

    #[test]
    fn radial_function_interpolates_periodically() {
        let f = RadialFunction::sample(
            &RadialProfile::Cosine {
                base: 1.0,
                amplitude: 0.2,
                frequency: 3,
                phase: 0.0,
            },
            720,
        );
        assert!((f.eval(0.0) - 1.2).abs() < 1e-12);
        assert!((f.eval(2.0 * PI) - 1.2).abs() < 1e-12);
        assert!((f.eval(PI / 3.0) - 0.8).abs() < 1e-4);
        assert!((f.eval(-0.1) - f.eval(2.0 * PI - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn distance_to_boundary_matches_closed_forms() {
        let g = Geometry::new(&annulus(), 2).unwrap();
        assert!((g.distance_to_boundary(&[0.5, 0.0]) - 0.25).abs() < 1e-15);
        let star = Geometry::new(
            &DomainSpec::StarshapedRing {
                inner: RadialProfile::Constant { radius: 0.25 },
                outer: RadialProfile::Constant { radius: 1.0 },
                angular_samples: 720,
            },
            2,
        )
        .unwrap();
        // polyline chords sit slightly inside the circle
        assert!((star.distance_to_boundary(&[0.0, 0.6]) - 0.35).abs() < 1e-4);
        let slab = Geometry::new(
            &DomainSpec::HalfspaceSlab {
                length: 4.0,
                half_width: 0.0,
            },
            1,
        )
        .unwrap();
        assert_eq!(slab.distance_to_boundary(&[1.0]), 1.0);
    }
}
