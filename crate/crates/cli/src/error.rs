use thiserror::Error;

/// Failure of a CLI command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Failure while running a valid request (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<sqlink::Error> for CliError {
    fn from(e: sqlink::Error) -> Self {
        use sqlink::Error as E;
        let msg = e.to_string();
        match e {
            E::Io(_)
            | E::NoConvergence { .. }
            | E::ZeroProbabilityBin { .. }
            | E::NoContour
            | E::TruncationTooSmall { .. }
            | E::DegenerateDesign(_)
            | E::NonPositiveVariance(_) => CliError::Runtime(msg),
            E::EmptyAfterDiscard { .. } => CliError::Runtime(format!(
                "{msg}; lower protocol.min_samples, widen protocol.bin_width, or simulate more samples per transmission"
            )),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
