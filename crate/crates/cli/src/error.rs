use thiserror::Error;

/// Errors grouped by process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit status 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit status 3.
    #[error("{0}")]
    Runtime(String),
    /// Exit status 4.
    #[error("validation FAIL: {0}")]
    ValidationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::ValidationFailed(_) => 4,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    std::io::Error,
    csv::Error,
    serde_json::Error,
    mpq_core::nn::NnError,
    mpq_core::env::EnvError,
    mpq_core::agent::AgentError,
    mpq_core::pareto::ParetoError,
    mpq_core::cost::CostError,
    rayon::ThreadPoolBuildError
);
