//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(
        "point leaves the quantization grid in component {component}: \
         |c - center| = {deviation:.6e} > radius = {radius:.6e}"
    )]
    GridOverflow {
        component: usize,
        deviation: f64,
        radius: f64,
    },
    #[error("quantizer index {index} out of range, max is {max}")]
    IndexOutOfRange { index: u64, max: u64 },
    #[error("packed bitstring length mismatch: expected {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("eps must be positive, got {0}")]
    InvalidEps(f64),
    #[error("quantized iteration diverges: alpha = {alpha} >= 1 (need at least {min_bits} bits)")]
    Divergent { alpha: f64, min_bits: u32 },
    #[error("empty bit range: b_max = {b_max} is below min_bits = {min_bits}")]
    EmptyRange { min_bits: u32, b_max: u32 },
    #[error("iterate became non-finite at iteration {iteration}")]
    NonFiniteState { iteration: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("laplacian has {zero_count} zero eigenvalues, expected exactly one")]
    RankDeficiency { zero_count: usize },
    #[error("vector is not in the image of the laplacian: projection residual {residual:.3e}")]
    NotInImage { residual: f64 },
    #[error("no connected geometric graph found after {attempts} attempts")]
    ConnectivityTimeout { attempts: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("inner solver failed at node {node}: gradient norm {grad_norm:.3e} after {iters} iterations")]
    InnerSolverFailure {
        node: usize,
        grad_norm: f64,
        iters: usize,
    },
    #[error("lipschitz estimation needs at least one sample")]
    EmptySample,
    #[error("condition number must be at least 2, got {0}")]
    KappaTooSmall(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("dimension mismatch at line {line}: expected {expected} fields, got {got}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("objective value must be nonnegative for the distance bound, got {0}")]
    NegativeObjective(f64),

    #[error("rate model yields non-positive rate {rate:.3e} at packet size n = {n}")]
    NonPositiveRate { n: u64, rate: f64 },
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("retransmission analysis is vacuous at p = 0; use the deterministic delay instead")]
    DegenerateP,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
