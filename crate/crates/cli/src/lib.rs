//! Benchmark harness: runs estimator sweeps, goodness curves and error
//! decompositions from a JSON experiment config and writes CSV/JSON outputs.

pub mod config;
pub mod harness;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<dckrr::Error> for CliError {
    fn from(e: dckrr::Error) -> Self {
        use dckrr::Error as E;
        let msg = e.to_string();
        match e {
            _ if e.is_numeric() => CliError::Numeric(msg),
            E::Data(_) | E::Io { .. } | E::Csv(_) => CliError::Data(msg),
            _ => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
