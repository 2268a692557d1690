use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(ppoisson::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ppoisson::Error as E;
        match self {
            CliError::Lib(
                E::CgNonConvergence { .. }
                | E::ContractionFailure { .. }
                | E::IterationCap { .. }
                | E::Divergence { .. }
                | E::LineSearch(_),
            ) => EXIT_DIVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<ppoisson::Error> for CliError {
    fn from(e: ppoisson::Error) -> Self {
        CliError::Lib(e)
    }
}
