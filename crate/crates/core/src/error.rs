use thiserror::Error;

pub type Result<T> = std::result::Result<T, TdsrError>;

#[derive(Debug, Error)]
pub enum TdsrError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix too stiff: 1-norm {norm:.3e} exceeds cap {cap:.3e}; use a smaller time step")]
    Stiffness { norm: f64, cap: f64 },

    #[error("contour error: {0}")]
    Contour(String),

    #[error("need at least {needed} time levels, got {got}")]
    InsufficientLevels { needed: usize, got: usize },

    #[error("functional {kind} is not supported here: {reason}")]
    FunctionalMismatch { kind: String, reason: String },

    #[error("renormalization sign failure at level {level}: ratio {ratio:.6e} is not positive")]
    Sign { level: usize, ratio: f64 },

    #[error("root failure at level {level}: {detail}")]
    RootFailure { level: usize, detail: String },

    #[error("newton failed at level {level} after {iterations} iterations, residual history {history:?}")]
    NewtonFailure {
        level: usize,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("singular jacobian at level {level}")]
    SingularJacobian { level: usize },

    #[error("positivity failure at level {level}: p = {p:.6e}")]
    Positivity { level: usize, p: f64 },

    #[error("fixed-point iteration diverged at iteration {iteration} (metric history tail {tail:?}); try a smaller block")]
    Divergence { iteration: usize, tail: Vec<f64> },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<TdsrError>,
    },

    #[error("block {block} starting at t = {t_start}: {source}")]
    AtBlock {
        block: usize,
        t_start: f64,
        #[source]
        source: Box<TdsrError>,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("pseudo initial condition {index} is identically zero")]
    DegenerateSplit { index: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("instability at t = {t}: max |u| = {max_abs:.3e}")]
    Instability { t: f64, max_abs: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TdsrError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        TdsrError::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Innermost error, with iteration and block context stripped.
    pub fn root_cause(&self) -> &TdsrError {
        match self {
            TdsrError::AtIteration { source, .. } | TdsrError::AtBlock { source, .. } => {
                source.root_cause()
            }
            other => other,
        }
    }
}
