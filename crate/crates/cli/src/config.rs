//! Run configuration: parsing, defaults and field-level validation.

use std::fmt;
use std::path::PathBuf;

use fraclap::geometry::StarshapeOptions;
use fraclap::grid::{DomainSpec, FieldSpec};
use fraclap::operator::{ExteriorSpec, FractionalParams};
use fraclap::powerlib::SearchBudget;
use fraclap::solver::{SolverOptions, MIN_P};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    CheckInequalities,
    CheckComparison,
    CheckScaling,
    StarshapeRing,
    StarshapeGeneral,
    Halfspace,
    OracleSuite,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::CheckInequalities => "check-inequalities",
            Subcommand::CheckComparison => "check-comparison",
            Subcommand::CheckScaling => "check-scaling",
            Subcommand::StarshapeRing => "starshape-ring",
            Subcommand::StarshapeGeneral => "starshape-general",
            Subcommand::Halfspace => "halfspace",
            Subcommand::OracleSuite => "oracle-suite",
        }
    }

    /// Whether the subcommand solves a problem on a user-supplied domain.
    fn needs_domain(self) -> bool {
        matches!(
            self,
            Subcommand::Solve
                | Subcommand::CheckComparison
                | Subcommand::CheckScaling
                | Subcommand::StarshapeRing
                | Subcommand::StarshapeGeneral
        )
    }
}

fn zero_field() -> FieldSpec {
    FieldSpec::Constant { value: 0.0 }
}

fn one_field() -> FieldSpec {
    FieldSpec::Constant { value: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityConfig {
    pub qs: Vec<f64>,
    pub ms: Vec<f64>,
    /// Random samples per `(q, M)` cell.
    pub samples: usize,
    /// Structured grid size and random samples of the constant certification search.
    pub search_grid: usize,
    pub search_random: usize,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        let budget = SearchBudget::default();
        Self {
            qs: vec![0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0],
            ms: vec![1.0, 10.0],
            samples: 100_000,
            search_grid: budget.grid,
            search_random: budget.random,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    Weak,
    Strong,
}

/// Data of problem B. Missing entries are copied from problem A.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerData {
    pub exterior: Option<ExteriorSpec>,
    pub g: Option<FieldSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub mode: ComparisonMode,
    /// Problem B, whose data must lie below problem A's.
    pub lower: LowerData,
    /// When positive, ignore `lower` and check this many seeded random ordered pairs.
    pub random_pairs: usize,
    /// Compacts keep this many grid spacings from the boundary.
    pub compact_spacings: f64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            mode: ComparisonMode::Weak,
            lower: LowerData::default(),
            random_pairs: 0,
            compact_spacings: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub t: f64,
    /// Grid spacings of the refinement study, coarse to fine.
    pub levels: Vec<f64>,
    /// Physical distance from the boundary of the nodes where the discrepancy is measured.
    pub eval_distance: f64,
    /// Required discrepancy reduction per refinement.
    pub min_ratio: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            t: 2.0,
            levels: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            eval_distance: 0.1,
            min_ratio: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralRingConfig {
    /// Data outside the outer boundary.
    pub b0: FieldSpec,
    /// Data on the hole.
    pub b1: FieldSpec,
}

impl Default for GeneralRingConfig {
    fn default() -> Self {
        Self {
            b0: zero_field(),
            b1: one_field(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub length: f64,
    pub half_width: f64,
    /// Source of the auxiliary solve; a bump near `x₁ = L/4` when absent.
    pub source: Option<FieldSpec>,
    /// Translations in grid spacings.
    pub shifts: Vec<usize>,
}

impl Default for HalfspaceConfig {
    fn default() -> Self {
        Self {
            length: 4.0,
            half_width: 0.0,
            source: None,
            shifts: vec![2, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Exponents of the gradient check.
    pub gradient_ps: Vec<f64>,
    pub gradient_instances: usize,
    /// Largest node count of a gradient-check grid.
    pub gradient_max_nodes: usize,
    pub gradient_tolerance: f64,
    pub constant_grids: usize,
    pub constant_tolerance: f64,
    pub p2_instances: usize,
    pub p2_max_nodes: usize,
    pub p2_tolerance: f64,
    /// Exponents of the brute-force comparison.
    pub tiny_ps: Vec<f64>,
    pub tiny_instances: usize,
    pub tiny_max_interior: usize,
    pub tiny_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            gradient_ps: vec![1.5, 2.0, 3.0],
            gradient_instances: 20,
            gradient_max_nodes: 64,
            gradient_tolerance: 1e-5,
            constant_grids: 10,
            constant_tolerance: 1e-10,
            p2_instances: 10,
            p2_max_nodes: 500,
            p2_tolerance: 1e-8,
            tiny_ps: vec![1.5, 3.0],
            tiny_instances: 5,
            tiny_max_interior: 6,
            tiny_tolerance: 1e-6,
        }
    }
}

/// Complete description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    /// Master seed; every randomized component derives its seed from it.
    #[serde(default)]
    pub seed: u64,
    /// Not echoed into reports, so that reruns into other directories compare equal.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Declared Hölder exponent of the solution, recorded as a hypothesis flag.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub r_inf: Option<f64>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default = "zero_field")]
    pub q: FieldSpec,
    #[serde(default = "zero_field")]
    pub g: FieldSpec,
    #[serde(default)]
    pub exterior: ExteriorSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub inequalities: InequalityConfig,
    #[serde(default)]
    pub comparison: ComparisonConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub starshape: StarshapeOptions,
    #[serde(default)]
    pub general: GeneralRingConfig,
    #[serde(default)]
    pub halfspace: HalfspaceConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_s() -> f64 {
    0.5
}

fn default_p() -> f64 {
    2.0
}

fn default_dim() -> usize {
    1
}

fn default_h() -> f64 {
    1.0 / 32.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConfigErrorKind {
    ParseError,
    ValidationError,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ConfigErrorKind::ParseError => "PARSE_ERROR",
            ConfigErrorKind::ValidationError => "VALIDATION_ERROR",
        };
        write!(f, "{kind}:")?;
        for e in &self.errors {
            write!(f, " [{}] {};", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Parses and validates a JSON configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
        kind: ConfigErrorKind::ParseError,
        errors: vec![FieldError::new(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )],
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if !(self.s > 0.0 && self.s < 1.0) {
            errs.push(FieldError::new("s", "s must lie in (0,1)"));
        }
        if !self.p.is_finite() {
            errs.push(FieldError::new("p", "p must be finite"));
        } else if self.p < MIN_P {
            errs.push(FieldError::new(
                "p",
                format!("p below supported minimum {MIN_P}"),
            ));
        }
        if errs.is_empty() {
            let params = FractionalParams::new(self.s, self.p);
            match (params, self.alpha) {
                (Err(e), _) => errs.push(FieldError::new("s", e.to_string())),
                (Ok(p), Some(a)) => {
                    if let Err(e) = p.with_alpha(a) {
                        errs.push(FieldError::new("alpha", e.to_string()));
                    }
                }
                _ => {}
            }
        }
        if !(self.dim == 1 || self.dim == 2) {
            errs.push(FieldError::new("dim", "dim must be 1 or 2"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            errs.push(FieldError::new("h", "h must be positive"));
        }
        if let Some(r) = self.r_inf {
            if !(r > 0.0 && r.is_finite()) {
                errs.push(FieldError::new("r_inf", "r_inf must be positive"));
            }
        }
        if self.subcommand.needs_domain() && self.domain.is_none() {
            errs.push(FieldError::new(
                "domain",
                format!("domain is required by {}", self.subcommand.name()),
            ));
        }
        if let Err(e) = self.solver.validate() {
            errs.push(FieldError::new("solver", e.to_string()));
        }
        match self.subcommand {
            Subcommand::CheckInequalities => self.validate_inequalities(&mut errs),
            Subcommand::CheckComparison => {
                if !(self.comparison.compact_spacings >= 0.0) {
                    errs.push(FieldError::new(
                        "comparison.compact_spacings",
                        "compact_spacings must be nonnegative",
                    ));
                }
            }
            Subcommand::CheckScaling => self.validate_scaling(&mut errs),
            Subcommand::StarshapeRing | Subcommand::StarshapeGeneral => {
                if let Err(e) = self.starshape.validate() {
                    errs.push(FieldError::new("starshape", e.to_string()));
                }
            }
            Subcommand::Halfspace => self.validate_halfspace(&mut errs),
            Subcommand::OracleSuite => self.validate_oracle(&mut errs),
            Subcommand::Solve => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError {
                kind: ConfigErrorKind::ValidationError,
                errors: errs,
            })
        }
    }

    fn validate_inequalities(&self, errs: &mut Vec<FieldError>) {
        let c = &self.inequalities;
        if c.qs.is_empty() || c.qs.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            errs.push(FieldError::new(
                "inequalities.qs",
                "qs must be a nonempty list of positive exponents",
            ));
        }
        if c.ms.is_empty() || c.ms.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            errs.push(FieldError::new(
                "inequalities.ms",
                "ms must be a nonempty list of positive bounds",
            ));
        }
        if c.samples == 0 {
            errs.push(FieldError::new(
                "inequalities.samples",
                "samples must be at least 1",
            ));
        }
        if c.search_grid < 2 {
            errs.push(FieldError::new(
                "inequalities.search_grid",
                "search_grid must be at least 2",
            ));
        }
    }

    fn validate_scaling(&self, errs: &mut Vec<FieldError>) {
        let c = &self.scaling;
        if !(c.t > 1.0 && c.t.is_finite()) {
            errs.push(FieldError::new("scaling.t", "t must exceed 1"));
        }
        if c.levels.len() < 2 {
            errs.push(FieldError::new(
                "scaling.levels",
                "at least two grid levels are required",
            ));
        } else if c.levels.iter().any(|h| !(*h > 0.0)) || c.levels.windows(2).any(|w| w[1] >= w[0])
        {
            errs.push(FieldError::new(
                "scaling.levels",
                "levels must be positive and strictly decreasing",
            ));
        }
        if !(c.eval_distance >= 0.0) {
            errs.push(FieldError::new(
                "scaling.eval_distance",
                "eval_distance must be nonnegative",
            ));
        }
        if !(c.min_ratio > 0.0) {
            errs.push(FieldError::new(
                "scaling.min_ratio",
                "min_ratio must be positive",
            ));
        }
    }

    fn validate_halfspace(&self, errs: &mut Vec<FieldError>) {
        let c = &self.halfspace;
        if !(c.length > 0.0 && c.length.is_finite()) {
            errs.push(FieldError::new(
                "halfspace.length",
                "length must be positive",
            ));
        }
        if self.dim == 2 && !(c.half_width > 0.0) {
            errs.push(FieldError::new(
                "halfspace.half_width",
                "half_width must be positive in two dimensions",
            ));
        }
        if c.shifts.is_empty() || c.shifts.contains(&0) {
            errs.push(FieldError::new(
                "halfspace.shifts",
                "shifts must be a nonempty list of positive integers",
            ));
        }
    }

    fn validate_oracle(&self, errs: &mut Vec<FieldError>) {
        let c = &self.oracle;
        for (field, ps) in [
            ("oracle.gradient_ps", &c.gradient_ps),
            ("oracle.tiny_ps", &c.tiny_ps),
        ] {
            if ps.iter().any(|p| !(*p >= MIN_P && p.is_finite())) {
                errs.push(FieldError::new(
                    field,
                    format!("p below supported minimum {MIN_P}"),
                ));
            }
        }
        if c.gradient_max_nodes < 8 {
            errs.push(FieldError::new(
                "oracle.gradient_max_nodes",
                "gradient_max_nodes must be at least 8",
            ));
        }
        if c.p2_max_nodes < 8 {
            errs.push(FieldError::new(
                "oracle.p2_max_nodes",
                "p2_max_nodes must be at least 8",
            ));
        }
        if !(1..=8).contains(&c.tiny_max_interior) {
            errs.push(FieldError::new(
                "oracle.tiny_max_interior",
                "tiny_max_interior must lie in 1..=8",
            ));
        }
        for (field, tol) in [
            ("oracle.gradient_tolerance", c.gradient_tolerance),
            ("oracle.constant_tolerance", c.constant_tolerance),
            ("oracle.p2_tolerance", c.p2_tolerance),
            ("oracle.tiny_tolerance", c.tiny_tolerance),
        ] {
            if !(tol > 0.0) {
                errs.push(FieldError::new(field, "tolerance must be positive"));
            }
        }
    }

    /// Fractional parameters with the declared Hölder exponent, if any.
    pub fn params(&self) -> fraclap::Result<FractionalParams> {
        let p = FractionalParams::new(self.s, self.p)?;
        match self.alpha {
            Some(a) => p.with_alpha(a),
            None => Ok(p),
        }
    }
}
