//! The Fitness Game: players guess a hidden daily calorie level and see a
//! noisy fitness score. After an open-loop phase, a soft-feedback phase shows
//! every player the crowd's mean guess as a recommendation. Simulated bots
//! follow the crowd dynamics so a single human still plays inside a crowd.

pub mod clock;
pub mod config;
pub mod error;
pub mod export;
pub mod http;
pub mod session;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{BotParams, GameConfig};
pub use error::{GameError, Result};
pub use export::{export_session, phase_events, read_log, ExportMeta, SessionExport};
pub use http::{router, AppState};
pub use session::{GuessOutcome, Phase, Session, StateView};
