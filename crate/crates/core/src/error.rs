use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received structurally invalid input.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A register or panel violates a data contract (bad values, gaps,
    /// mismatched counts, unreadable files with broken schemas).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical procedure failed (no convergence, infeasible design,
    /// non-invertible weight matrix).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The design matrix is rank deficient; the offending columns are named.
    #[error("singular design, collinear columns: {}", .0.join(", "))]
    SingularDesign(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
