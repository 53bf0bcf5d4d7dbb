use thiserror::Error;

/// Errors raised by constructors and operations in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("{line} {index} sums to {sum}, expected 1")]
    Stochasticity {
        line: LineKind,
        index: usize,
        sum: f64,
    },

    #[error("entry ({row}, {col}) = {value} is negative")]
    Negativity { row: usize, col: usize, value: f64 },

    #[error("matrix is not unitary: ||U*U - I||_F = {defect:e}")]
    NotUnitary { defect: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Row,
    Column,
}

impl std::fmt::Display for LineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LineKind::Row => f.write_str("row"),
            LineKind::Column => f.write_str("column"),
        }
    }
}

impl Error {
    /// Short machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Stochasticity { .. } => "stochasticity",
            Error::Negativity { .. } => "negativity",
            Error::NotUnitary { .. } => "not_unitary",
            Error::Parameter(_) => "parameter",
            Error::NotApplicable(_) => "not_applicable",
            Error::Internal(_) => "internal",
            Error::Numeric(_) => "numeric",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
