use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,
    #[error("empty horizon")]
    EmptyHorizon,
    #[error("invalid influence weight {0}")]
    InvalidInfluence(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not a contraction (m = {0})")]
    NotContraction(f64),
    #[error("no usable agents")]
    NoUsableAgents,
    #[error("non-contractive fit (slope {0})")]
    NonContractiveFit(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient excitation: {0} usable observations")]
    InsufficientExcitation(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty grid")]
    EmptyGrid,
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("percentage out of range: {value} at row {row}")]
    PercentageOutOfRange { row: usize, value: f64 },
    #[error("duplicate entry for ({entity}, {year})")]
    DuplicateEntry { entity: String, year: i32 },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
