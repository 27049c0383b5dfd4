use std::fmt;
use std::path::Path;

use virlab_core::Error as CoreError;

/// Failure classes mapped to process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed or inconsistent input: exit 2.
    Validation(String),
    /// Filesystem failure: exit 3.
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors raised while setting up a computation are input problems.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Whether a core error reflects bad input rather than a numerical outcome.
pub fn is_input_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::InvalidInput(_)
            | CoreError::OutsideHillRegion { .. }
            | CoreError::InconsistentEnergy(_)
            | CoreError::WindowOutOfSpan { .. }
    )
}

/// Split a core result into a recorded outcome or a validation failure.
pub fn outcome<T>(r: virlab_core::Result<T>) -> Result<Result<T, String>, CliError> {
    match r {
        Ok(x) => Ok(Ok(x)),
        Err(e) if is_input_error(&e) => Err(e.into()),
        Err(e) => Ok(Err(e.to_string())),
    }
}
