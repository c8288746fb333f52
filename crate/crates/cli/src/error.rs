use std::path::PathBuf;

use reifenberg::Error;
use thiserror::Error;

/// Command failures, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// Library error raised while reading `path`.
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: Error },

    #[error(transparent)]
    Library(#[from] Error),

    #[error("audit failed: {0}")]
    Audit(String),
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_AUDIT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Malformed or inconsistent inputs are schema errors; everything raised
/// while computing is numeric.
fn library_code(e: &Error) -> u8 {
    match e {
        Error::Schema { .. }
        | Error::InvalidParameter { .. }
        | Error::MissingWeights
        | Error::MissingNormals
        | Error::DimensionMismatch { .. }
        | Error::UnsupportedDimension { .. } => EXIT_SCHEMA,
        _ => EXIT_NUMERIC,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => EXIT_IO,
            Self::Input { source, .. } | Self::Library(source) => library_code(source),
            Self::Audit(_) => EXIT_AUDIT,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_contract() {
        let schema = CliError::Input {
            path: "x.json".into(),
            source: Error::Schema { path: "$.data".into(), reason: "missing".into() },
        };
        assert_eq!(schema.exit_code(), EXIT_SCHEMA);
        assert_eq!(CliError::Library(Error::MissingWeights).exit_code(), EXIT_SCHEMA);
        assert_eq!(CliError::Library(Error::Numerical("stall".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::Audit("compatibility".into()).exit_code(), EXIT_AUDIT);
    }
}
