use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{path}: line {line}: {msg}")]
    Csv { path: String, line: u64, msg: String },
    #[error(transparent)]
    Model(#[from] pcwqed::Error),
    #[error("fit did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    /// 2 for bad input of any kind, 3 for numerical trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv { .. } => 2,
            CliError::Model(pcwqed::Error::Input(_)) => 2,
            CliError::Model(_) | CliError::NotConverged(_) => 3,
        }
    }
}
