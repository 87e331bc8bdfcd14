use std::fmt;

use coda_alpha::CodaError;
use thiserror::Error;

/// Exit-code class of a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, bad role specification, unreadable model file.
    Config,
    /// Input data violate a requirement (parse failures, zeros, labels).
    Data,
    /// A numerical procedure could not produce an answer.
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("input has no data rows")]
    EmptyData,

    #[error("column {0:?} named in the roles is not in the input header")]
    MissingColumn(String),

    #[error("{0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Coda(#[from] CodaError),
}

impl CliError {
    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Config(_) | CliError::MissingColumn(_) => ErrorClass::Config,
            CliError::Parse { .. } | CliError::EmptyData | CliError::Data(_) => ErrorClass::Data,
            CliError::Io { .. } => ErrorClass::Config,
            CliError::Coda(e) => classify(e),
        }
    }

    /// Short machine-readable code.
    pub fn code(&self) -> String {
        match self {
            CliError::Config(_) => "ConfigError".into(),
            CliError::Parse { .. } => "ParseError".into(),
            CliError::EmptyData => "EmptyData".into(),
            CliError::MissingColumn(_) => "MissingColumn".into(),
            CliError::Data(_) => "DataError".into(),
            CliError::Io { .. } => "IoError".into(),
            CliError::Coda(e) => format!("{e:?}")
                .split(|c: char| !c.is_alphanumeric())
                .next()
                .unwrap_or("Error")
                .to_string(),
        }
    }

    /// The single line written to stderr on failure.
    pub fn structured_line(&self) -> String {
        let message = self.to_string().replace('\\', "\\\\").replace('"', "\\\"");
        format!(
            "error kind={} code={} exit={} message=\"{}\"",
            self.class().name(),
            self.code(),
            self.class().exit_code(),
            message
        )
    }
}

fn classify(e: &CodaError) -> ErrorClass {
    use CodaError::*;
    match e {
        AlphaOutOfRange(_) | AlphaIsZero | InvalidArgument(_) => ErrorClass::Config,
        NegativePart { .. }
        | AllZeroVector
        | InvalidDimension(_)
        | ZeroWithNonpositiveAlpha(_)
        | ZeroPart { .. }
        | DimensionMismatch(_)
        | AllZeroComponent(_)
        | ReplacementExceedsUnity { .. }
        | TooFewRows(_)
        | UnknownFactorLevel(_)
        | LabelMismatch { .. }
        | FoldTooSmall(_) => ErrorClass::Data,
        OutOfRange
        | FittedZero { .. }
        | SingularCovariance
        | RankDeficientDesign
        | SingularScores
        | OptimizerFailure(_)
        | DegenerateVariance => ErrorClass::Numeric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_and_classes() {
        let e = CliError::from(CodaError::SingularScores);
        assert_eq!(e.class().exit_code(), 4);
        assert_eq!(e.code(), "SingularScores");
        let e = CliError::from(CodaError::ZeroPart {
            row: 1,
            component: 2,
        });
        assert_eq!(e.code(), "ZeroPart");
        assert_eq!(e.class().exit_code(), 3);
        let line = CliError::Config("bad \"x\"".into()).structured_line();
        assert!(line.starts_with("error kind=config code=ConfigError exit=2"));
        assert!(!line.contains('\n'));
    }
}
