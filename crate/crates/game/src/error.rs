use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("guess {value} is outside [{min}, {max}] kcal")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("session over")]
    SessionOver,
    #[error("session already started")]
    AlreadyStarted,
    #[error("session is not finished")]
    NotFinished,
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Model(#[from] softcrowd::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;
