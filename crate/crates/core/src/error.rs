use thiserror::Error;

/// Errors raised by instance handling, the solvers and the oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("structure violation: {0}")]
    StructureViolation(String),

    #[error("cluster too large at level {level}: {members:?} exceeds cap {cap}")]
    ClusterTooLarge {
        level: usize,
        members: Vec<String>,
        cap: usize,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("demand unsatisfiable")]
    DemandUnsatisfiable,

    #[error("dimension cap exceeded: {dim} > {cap}")]
    DimensionCapExceeded { dim: usize, cap: usize },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("policy undefined at state {state} step {step}")]
    PolicyUndefined { state: String, step: usize },

    #[error("no feasible policy")]
    NoFeasiblePolicy,

    #[error("no feasible horizon up to {0}")]
    NoFeasibleHorizon(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
