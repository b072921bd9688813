use thiserror::Error;

/// Process exit status for each failure class.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("input data error: {0}")]
    Input(String),

    #[error(transparent)]
    Library(#[from] gaussvol::Error),

    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Config(_) | CliError::Input(_) => EXIT_CONFIG,
            CliError::Library(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Library(gaussvol::Error::Config(_)) => EXIT_CONFIG,
            CliError::Library(_) => EXIT_NUMERICAL,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
            CliError::Io(_) | CliError::Csv(_) => EXIT_FAILURE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_failure_class() {
        assert_eq!(CliError::Parse("x".into()).exit_code(), 2);
        assert_eq!(CliError::Config(vec![]).exit_code(), 2);
        assert_eq!(CliError::Library(gaussvol::Error::Config("x".into())).exit_code(), 2);
        let branch = gaussvol::Error::Resolution {
            index: 3,
            jump: 3.0,
            limit: 2.0,
        };
        assert_eq!(CliError::Library(branch).exit_code(), 3);
        let singular = gaussvol::Error::Singular {
            column: 0,
            pivot: 0.0,
            threshold: 1e-14,
        };
        assert_eq!(CliError::Library(singular).exit_code(), 3);
        assert_eq!(CliError::Acceptance("x".into()).exit_code(), 4);
    }
}
