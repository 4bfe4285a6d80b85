use thiserror::Error;

/// Errors raised by moment computation, the dual solvers and the evaluation helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need at least 2 samples, got {0}")]
    EmptyOrTiny(usize),

    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("moment order must be even and >= 2, got {0}")]
    InvalidOrder(usize),

    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),

    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("coefficients are outside the feasible cone")]
    InfeasiblePoint,

    #[error("degenerate samples: Hankel matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    HankelNotPd { min_eigenvalue: f64 },

    #[error("solver did not converge after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("line search stalled at iteration {iteration} (gradient max-norm {gradient_norm:e})")]
    LineSearchStalled {
        iteration: usize,
        gradient_norm: f64,
    },

    #[error("no maximum-entropy density has these moments (leading coefficient left the integrable region)")]
    NonIntegrable,

    #[error("entropy gap {0:e} is negative beyond tolerance; moments do not match")]
    NegativeResult(f64),

    #[error("reference density underflows at x = {x} where the target density is {p:e}")]
    SupportMismatch { x: f64, p: f64 },

    #[error("component {0} collapsed during EM on every restart")]
    CollapsedComponent(usize),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("unknown example id {0} (expected 1..=5)")]
    UnknownExample(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
