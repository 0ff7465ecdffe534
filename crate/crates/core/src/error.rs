/// Failures raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("grid needs at least {min} nodes, got {m}")]
    GridTooSmall { m: usize, min: usize },
    #[error("invalid grid: x_max = {x_max}, m = {m}")]
    InvalidGrid { x_max: f64, m: usize },
    #[error("extrapolation stencil reaches node {needed} but the grid has {available} interior nodes")]
    StencilOutOfRange { needed: usize, available: usize },
    #[error("invalid step control: {0}")]
    InvalidControl(&'static str),
    #[error("point {x} outside interpolation span [{lo}, {hi}]")]
    OutOfSpan { x: f64, lo: f64, hi: f64 },
    #[error("regime {regime}: boundary square-root argument {value} is below the degeneracy floor")]
    DegenerateSqrtArgument { regime: usize, value: f64 },
    #[error("regime {regime}: negative radicand {value} at node {node}")]
    NegativeRadicand { regime: usize, node: usize, value: f64 },
    #[error("boundary slope quadratic has negative discriminant {discriminant}")]
    ComplexRoot { discriminant: f64 },
    #[error("boundary slope is not finite")]
    NonFiniteSlope,
    #[error("time step collapsed to {k} at tau = {tau}")]
    StepStalled { tau: f64, k: f64 },
    #[error("gamma was not computed for this solve")]
    GammaNotComputed,
    #[error("boundary pipeline failed at tau = {tau}: {source}")]
    AtTime {
        tau: f64,
        #[source]
        source: alloc::boxed::Box<SolverError>,
    },
}

impl SolverError {
    /// Failures of the boundary pipeline that a smaller time step can cure.
    pub fn is_step_recoverable(&self) -> bool {
        matches!(
            self,
            SolverError::ComplexRoot { .. }
                | SolverError::DegenerateSqrtArgument { .. }
                | SolverError::NegativeRadicand { .. }
                | SolverError::NonFiniteSlope
        )
    }
}
