use thiserror::Error;

/// Errors raised by the geometry engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("warping function is not positive: rho({t}) = {value}")]
    NonPositiveWarp { t: f64, value: f64 },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("{t} lies outside the interval [{lo}, {hi}]")]
    OutOfInterval { t: f64, lo: f64, hi: f64 },

    #[error("unsupported fiber dimension {0}")]
    UnsupportedDimension(usize),

    #[error("latitude band starts at {0}, too close to the pole (need >= 0.2)")]
    PoleTooClose(f64),

    #[error("field shape {found:?} does not match grid shape {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("graph is not spacelike at grid point {index}: rho^2 - |Du|^2 = {gap:e} (rho^2 = {rho_sq:e})")]
    NotSpacelike { index: usize, gap: f64, rho_sq: f64 },

    #[error("height {value} at grid point {index} leaves the warping interval")]
    HeightOutOfInterval { index: usize, value: f64 },

    #[error("induced metric ill-conditioned at grid point {index} (condition number {condition:e})")]
    EigenFailure { index: usize, condition: f64 },

    #[error("unsupported fiber: {0}")]
    UnsupportedFiber(String),

    #[error("cannot normalize by H_{k}: min value {min:e}")]
    NormalizeByZero { k: usize, min: f64 },

    #[error("hypothesis violated: {predicate}")]
    HypothesisViolation { predicate: String },

    #[error("H_{k} = {value:e} <= 0 at grid point {index}; H_k^(1/k) undefined")]
    NegativeHk { k: usize, index: usize, value: f64 },

    #[error("G is not positive: G({t}) = {value}")]
    BadG { t: f64, value: f64 },

    #[error("tail exponent {exponent} is within {margin} of -1; divergence undecided")]
    AmbiguousTail { exponent: f64, margin: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        residual_history: Vec<f64>,
    },

    #[error("H_{k} = {value:e} <= 0 at grid point {index} in iterate {iteration}; ellipticity lost")]
    LostEllipticity {
        k: usize,
        iteration: usize,
        index: usize,
        value: f64,
    },

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
