use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("diagonal block A22 of group {0} is singular")]
    SingularBlock(usize),
    #[error("diagonal block A22 of subgroup ({0}, {1}) is singular")]
    SingularSubBlock(usize, usize),
    #[error("group Schur complement H22 of group {0} is singular")]
    SingularGroupSchur(usize),
    #[error("Schur complement of the fixed-effects block is singular")]
    SingularSchur,
    #[error("matrix is not symmetric positive definite")]
    NonSpd,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("value {0} is outside the support of the distribution")]
    OutOfSupport(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("ragged group structure: {0}")]
    RaggedGroup(String),
    #[error("non-numeric value {value:?} in column `{column}` at data row {row}")]
    NonNumeric { column: String, row: usize, value: String },
    #[error("column `{0}` has zero variance")]
    ConstantColumn(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("too few usable draws ({0})")]
    TooFewDraws(usize),
    #[error("grid captures only {0:.6} of the probability mass")]
    GridTooNarrow(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularBlock(_)
            | Error::SingularSubBlock(..)
            | Error::SingularGroupSchur(_)
            | Error::SingularSchur
            | Error::NonSpd
            | Error::SingularMatrix
            | Error::NumericalBreakdown(_)
            | Error::TooFewDraws(_)
            | Error::GridTooNarrow(_) => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration { iteration, source: Box::new(e) },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
