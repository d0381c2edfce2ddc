use std::fmt;

/// A failed command, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation (exit 1).
    Usage(String),
    /// Unreadable, malformed or inconsistent input, or unwritable output (exit 2).
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn at_frame(index: usize) -> impl FnOnce(semfuse::Error) -> CliError {
        move |e| CliError::Data(format!("frame {index}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<semfuse::Error> for CliError {
    fn from(e: semfuse::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
