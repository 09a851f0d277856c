use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Stability(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Stability(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Errors raised while building a setup from a validated config are
    /// still configuration problems, except for a CFL violation.
    pub fn setup(e: pfode::Error) -> Self {
        match e {
            pfode::Error::CflViolation { .. } => CliError::Stability(e.to_string()),
            pfode::Error::NonConvergence { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Stability(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<pfode::Error> for CliError {
    fn from(e: pfode::Error) -> Self {
        match e {
            pfode::Error::CflViolation { .. } => CliError::Stability(e.to_string()),
            pfode::Error::Io(_) | pfode::Error::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
