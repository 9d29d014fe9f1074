//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structured-text input failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input parsed but violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A voltage key or option names something the geometry does not have.
    #[error("unknown electrode '{0}'")]
    UnknownElectrode(String),

    /// Field evaluation requested on or beyond a conductor plane.
    #[error("boundary evaluation: {0}")]
    BoundaryEvaluation(String),

    /// Field evaluation requested on a charged facet surface.
    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    /// An iterative routine failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// The Hessian at a candidate equilibrium is not positive definite.
    #[error("not a trapping point: {0}")]
    NotTrappingPoint(String),

    /// A routine that requires a stationary point was handed something else.
    #[error("not a stationary point: {0}")]
    NotStationary(String),

    /// The escape-path grid could not connect the minimum to the boundary.
    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    /// The voltage solve cannot reach the requested targets.
    #[error("targets unreachable: {summary}")]
    TargetsUnreachable {
        summary: String,
        /// Per-objective residuals, as (objective, residual).
        residuals: Vec<(String, f64)>,
    },

    /// A polynomial fit has no usable quadratic term.
    #[error("degenerate curvature: {0}")]
    DegenerateCurvature(String),

    /// The least-squares design matrix is rank deficient.
    #[error("degenerate fit: unidentifiable combination {combination}")]
    DegenerateFit { combination: String },

    /// Too few usable rows for the requested fit or statistic.
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Normalization was requested for a mode with no exponent supplied.
    #[error("missing exponent for mode '{0}'")]
    MissingExponent(String),
}
