use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// `|∂f/∂ω|` fell below the degeneracy threshold at the given point.
    #[error("degenerate noise fiber at x = {x}, omega = {omega} (|df/domega| = {slope:e})")]
    DegenerateFiber { x: f64, omega: f64, slope: f64 },

    #[error("window does not contain any grid cell")]
    EmptyWindow,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge after {iterations} operator applications (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("recovered stationary supports overlap on {fraction:.4} of the cells")]
    SupportOverlap { fraction: f64 },

    #[error("cycle length {graph} from the support graph disagrees with the peripheral spectrum")]
    CycleMismatch { graph: usize },

    #[error("no cell reaches the support threshold")]
    AllBelowThreshold,

    #[error("set-valued iteration did not reach a fixed set (last sizes {previous} -> {last})")]
    NoFixedSet { previous: usize, last: usize },

    #[error("all {trials} escape trials were censored")]
    AllCensored { trials: usize },

    #[error("orbit continuation lost at a = {last_good}")]
    LostTrack { last_good: f64 },

    #[error("kernel density is unbounded (max/mean ratio {ratio:e})")]
    UnboundedKernel { ratio: f64 },

    #[error("kernel support has {components} components; a single interval is required")]
    MulticomponentSupport { components: usize },
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
