use pv_sindy::Error;

/// Failure of one command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(Error),
    #[error("regression failed: {0}")]
    Regression(Error),
    #[error("model is missing a required term: {0}")]
    MissingTerm(Error),
    #[error("the configuration has no [fault] block")]
    MissingFault,
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Regression(_) => 4,
            CliError::MissingTerm(_) => 5,
            CliError::MissingFault => 6,
        }
    }

    /// Regression-stage failure, except a missing model term, which has its
    /// own exit code.
    pub fn regression(e: Error) -> Self {
        match e.innermost() {
            Error::MissingTerm { .. } => CliError::MissingTerm(e),
            _ => CliError::Regression(e),
        }
    }
}
