use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] conceptkit::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{}: {message}", path.display())]
    Labels { path: PathBuf, message: String },

    #[error("{failed} of {trials} trials failed; first: {detail}")]
    Verification { failed: usize, trials: usize, detail: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(message.into())
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Core(e) => e.code(),
            Self::Usage(_) => "usage",
            Self::Labels { .. } => "labels",
            Self::Verification { .. } => "verification",
        }
    }

    /// 2 for problems with the invocation or its input files, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Core(conceptkit::Error::File { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 2,
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The diagnostic as one line: `error[code]: message`.
    pub fn render(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {message}", self.code())
    }
}

pub type CliResult<T> = Result<T, CliError>;
