//! Shared pieces of the `lpo-knn` binary: dataset CSV interchange, output
//! document assembly, and the error-to-exit-code mapping.

pub mod io;
pub mod output;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    /// Input or parse problem: exit 2.
    pub fn input(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    /// Failed verification or oracle check: exit 1.
    pub fn check_failed(message: impl Into<String>) -> Self {
        Self::new(1, message)
    }
}

impl From<lpo_knn::Error> for CliError {
    fn from(e: lpo_knn::Error) -> Self {
        let code = match &e {
            lpo_knn::Error::InvalidInput(_) | lpo_knn::Error::InvalidArgument(_) => 2,
            lpo_knn::Error::Infeasible(_)
            | lpo_knn::Error::InsufficientNeighbors { .. }
            | lpo_knn::Error::EnumerationCapExceeded { .. }
            | lpo_knn::Error::OutOfRegime(_)
            | lpo_knn::Error::MissingConstant(_) => 3,
        };
        CliError::new(code, e.to_string())
    }
}
