use thiserror::Error;

#[derive(Debug, Error)]
pub enum FchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid well: {0}")]
    InvalidWell(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("singular quadrature: {0}")]
    SingularQuadrature(String),

    #[error("solver failed to converge: {0}")]
    NonConvergence(String),

    #[error("ill-conditioned solve: condition estimate {0:.3e}")]
    Conditioning(f64),

    #[error("solvability condition violated: {0}")]
    Fredholm(String),

    #[error("spectral error: {0}")]
    Spectral(String),

    #[error("eigenvalue tracking lost: {0}")]
    Tracking(String),

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("domain truncation: {0}")]
    Truncation(String),

    #[error("under-resolved grid: {0}")]
    Resolution(String),

    #[error("fixed-point iteration failed to contract: {0}")]
    ContractionFailure(String),

    #[error("integrator step size underflow at t = {0}")]
    Stiffness(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FchError {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            FchError::InvalidArgument(_)
            | FchError::InvalidWell(_)
            | FchError::InvalidGrid(_)
            | FchError::Config(_) => 2,
            FchError::Regime(_) => 4,
            FchError::Truncation(_) | FchError::Resolution(_) => 5,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, FchError>;
