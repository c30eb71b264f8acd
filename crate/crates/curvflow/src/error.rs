//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular metric: {0}")]
    SingularMetric(String),
    #[error("numerical instability: {0}")]
    NumericalInstability(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("graph is not spacelike at node {node}: |Du| = {du_norm}")]
    NotSpacelike { node: usize, du_norm: f64 },
    #[error("principal curvatures leave the cone at node {node} (slack {slack})")]
    NotAdmissible { node: usize, slack: f64 },
    #[error("degenerate eigenframe: {0}")]
    DegenerateEigenframe(String),
    #[error("global term denominator below floor: |{denominator}| < {floor}")]
    DegenerateGlobalTerm { denominator: f64, floor: f64 },
    #[error("time step underflow: dt = {dt} < dt_min = {dt_min}")]
    TimeStepUnderflow { dt: f64, dt_min: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("eigensolve failure: {0}")]
    EigenSolveFailure(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code for the CLI: 2 validation, 3 numerical abort,
    /// 4 no-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::InvalidArgument(_) => 2,
            Error::NoConvergence(_) => 4,
            _ => 3,
        }
    }
}
