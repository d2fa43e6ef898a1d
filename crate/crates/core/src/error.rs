use crate::dynamics::PhaseState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at tau = {}: {reason}", last.t)]
    IntegrationFailure { last: PhaseState, reason: String },

    #[error("energy drift {drift:e} exceeds tolerance at tau = {}", at.t)]
    ToleranceViolation { drift: f64, at: PhaseState },

    #[error("root refinement did not converge: {0}")]
    NoConvergence(String),

    #[error("orbit too close to a focal point: |m12| = {m12:e}")]
    FocalSingularity { m12: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sampling step {tau} cannot resolve w up to {w_max} (needs w_max * tau < pi)")]
    Nyquist { tau: f64, w_max: f64 },

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("hash mismatch for {what}: expected {expected}, found {found}")]
    HashMismatch { what: String, expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } | Error::HashMismatch { .. } => 3,
            Error::Domain(_) | Error::InvalidInput(_) | Error::Nyquist { .. } => 1,
            _ => 2,
        }
    }
}
