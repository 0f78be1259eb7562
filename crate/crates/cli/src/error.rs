use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration: unknown key, unparseable value, missing
    /// requirement. Exits with status 2 and the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// The requested dynamics grow without bound and the run did not opt
    /// in. Exits with status 3 and names the unstable eigenvalue.
    #[error(
        "refusing to run: the drift matrix has an unstable eigenvalue \
         {re:+.6e}{im:+.6e}i (positive real part), so excitations grow \
         without bound; pass --allow-growing (or allow_growing = true) to \
         run it anyway"
    )]
    Growing { re: f64, im: f64 },

    /// Steady-state style scenarios on non-settling dynamics; opting in
    /// cannot help, the requested object does not exist.
    #[error(
        "no settled state exists: the drift matrix has eigenvalue \
         {re:+.6e}{im:+.6e}i with non-negative real part along an excited \
         direction, so the covariance never converges"
    )]
    NoSteadyState { re: f64, im: f64 },

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Compute(#[from] squeeze_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Growing { .. } | CliError::NoSteadyState { .. } => 3,
            CliError::Io(_) | CliError::Compute(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
