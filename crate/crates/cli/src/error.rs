use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data (trace files in ingest mode).
    #[error("input error: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(eitats::Error),

    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<eitats::Error> for CliError {
    fn from(e: eitats::Error) -> Self {
        use eitats::Error as E;
        match e {
            E::Io(err) => CliError::Io(err.to_string()),
            E::Json(err) => CliError::Io(err.to_string()),
            E::Parse { .. } | E::Schema(_) | E::InvariantViolation(_) => CliError::Input(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
