use thiserror::Error;

/// Errors raised by the toolkit. Each variant carries a module-qualified code
/// (see [`Error::code`]) that the command-line front end reports verbatim.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("no lattice node falls inside the domain")]
    EmptyInterior,
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    #[error("invalid grid parameter: {0}")]
    BadGrid(String),
    #[error("non-finite value {value} at node {node}")]
    NonFiniteValue { node: usize, value: f64 },
    #[error("functions live on different grids")]
    GridMismatch,

    #[error("exponent must be positive, got {0}")]
    NonpositiveExponent(f64),
    #[error("argument outside the inequality's domain: {0}")]
    Domain(String),
    #[error("|a| = {a} exceeds the bound M = {m}")]
    OutOfRange { a: f64, m: f64 },
    #[error("supremum search diverged: ratio {ratio} at a = {a}, b = {b}")]
    SearchDiverged { ratio: f64, a: f64, b: f64 },

    #[error("invalid fractional parameters: {0}")]
    BadParams(String),
    #[error("truncation radius {r_inf} does not exceed the grid diameter {diameter}")]
    TruncationTooSmall { r_inf: f64, diameter: f64 },
    #[error("function deviates from the exterior data by {deviation:e} at node {node}")]
    ExteriorMismatch { node: usize, deviation: f64 },
    #[error("node {0} is not an interior node")]
    NotInterior(usize),
    #[error("perturbation mask overlaps the interior at node {0}")]
    MaskOverlapsInterior(usize),
    #[error("invalid problem data: {0}")]
    BadProblem(String),

    #[error("line search observed a convexity violation (energy rose by {excess:e})")]
    NonconvexDetected { excess: f64 },
    #[error("linear oracle requires p = 2, got p = {0}")]
    NotP2(f64),
    #[error("linear system is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid solver options: {0}")]
    BadOptions(String),

    #[error("data are not ordered: {0}")]
    DataNotOrdered(String),
    #[error("supplied function is negative ({value:e}) at node {node}")]
    NegativeInput { node: usize, value: f64 },
    #[error("q is not nondecreasing in x1: q({lo:?}) > q({hi:?})")]
    QNotMonotone { lo: Vec<f64>, hi: Vec<f64> },
    #[error("exterior data do not have starshaped superlevel sets (violation {violation:e})")]
    DataNotStarshaped { violation: f64 },
    #[error("scaling factor {0} is not supported")]
    BadScaling(f64),
}

impl Error {
    /// Module-qualified error code, e.g. `core.EMPTY_INTERIOR`.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            EmptyInterior => "core.EMPTY_INTERIOR",
            BadGeometry(_) => "core.BAD_GEOMETRY",
            BadGrid(_) => "core.BAD_GRID",
            NonFiniteValue { .. } => "core.NON_FINITE_VALUE",
            GridMismatch => "operator.GRID_MISMATCH",
            NonpositiveExponent(_) => "powerlib.NONPOSITIVE_EXPONENT",
            Domain(_) => "powerlib.DOMAIN",
            OutOfRange { .. } => "powerlib.OUT_OF_RANGE",
            SearchDiverged { .. } => "powerlib.SEARCH_DIVERGED",
            BadParams(_) => "operator.BAD_PARAMS",
            TruncationTooSmall { .. } => "operator.TRUNCATION_TOO_SMALL",
            ExteriorMismatch { .. } => "operator.EXTERIOR_MISMATCH",
            NotInterior(_) => "operator.NOT_INTERIOR",
            MaskOverlapsInterior(_) => "operator.MASK_OVERLAPS_INTERIOR",
            BadProblem(_) => "operator.BAD_PROBLEM",
            NonconvexDetected { .. } => "solver.NONCONVEX_DETECTED",
            NotP2(_) => "solver.NOT_P2",
            NotPositiveDefinite => "solver.NOT_POSITIVE_DEFINITE",
            BadOptions(_) => "solver.BAD_OPTIONS",
            DataNotOrdered(_) => "principles.DATA_NOT_ORDERED",
            NegativeInput { .. } => "principles.NEGATIVE_INPUT",
            QNotMonotone { .. } => "geometry.Q_NOT_MONOTONE",
            DataNotStarshaped { .. } => "geometry.DATA_NOT_STARSHAPED",
            BadScaling(_) => "principles.GRID_MISALIGNED",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
