use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Degenerate`, `Inconsistent`, `Unsupported`, `AssumptionViolated` and
/// `TooLarge` are constraint violations (the input is well-formed but outside
/// the operating range of the requested computation); everything else is a
/// hard input or I/O error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    /// A proportion vector whose entries do not map to integer per-cluster
    /// treated counts.
    #[error("inconsistent proportions: {0}")]
    Inconsistent(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("degenerate assignment: {0}")]
    Degenerate(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("enumeration too large: {count} > limit {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for violations of preconditions/constraints as opposed to
    /// malformed input or I/O failures. The CLI maps these to exit code 2.
    pub fn is_constraint_violation(&self) -> bool {
        matches!(
            self,
            Error::Inconsistent(_)
                | Error::Unsupported(_)
                | Error::Degenerate(_)
                | Error::AssumptionViolated(_)
                | Error::TooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
