use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite field evaluation while perturbing coordinate {coordinate}")]
    Evaluation { coordinate: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("state became non-finite after t = {t_last}")]
    BlowUp { t_last: f64 },

    #[error("implicit stage did not converge in {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("order {order} is degenerate in dimension {dim}")]
    DegenerateOrder { order: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("structure matrix is singular (|det| = {det:e}); the system is constrained")]
    SingularStructure { det: f64 },

    #[error("vortices {first} and {second} collide (distance {distance:e})")]
    Collision {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error("step map is irreversible at this state (det M = {det:e})")]
    Irreversible { det: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
