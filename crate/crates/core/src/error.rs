use thiserror::Error;

/// Errors raised by the spectral, diffusion, sampling and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge to tolerance {tolerance:e} within {max_iter} iterations")]
    NonConvergence { tolerance: f64, max_iter: usize },

    #[error("coefficient {mode} is nonzero on a zero eigenvalue; not in the Cameron-Martin space")]
    NotInCameronMartin { mode: usize },

    #[error("time {t} outside of [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("quadrature integrand is not finite at s = {s}")]
    QuadratureDivergence { s: f64 },

    #[error("all component variances vanish; density is degenerate")]
    DegenerateDensity,

    #[error("normal equations are singular for bin {bin}, mode {mode} (ridge = 0)")]
    SingularFit { bin: usize, mode: usize },

    #[error("non-finite state at step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },

    #[error("CFL condition violated: beta*dt*(1/dx^2 + 1/dy^2) = {ratio} > 0.5")]
    CflViolation { ratio: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("requested {requested} components but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
