//! Flat-file export of a finished session.

use serde::{Deserialize, Serialize};
use softcrowd::resample::{DecisionEvent, GridSpec};

use crate::config::GameConfig;
use crate::error::{GameError, Result};
use crate::session::{GuessRecord, Phase, PhaseInfo, Session};

pub const CSV_HEADER: [&str; 6] = ["phase", "player_id", "timestamp_s", "guess", "fitness", "score_delta"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMeta {
    pub session_id: String,
    pub seed: u64,
    pub phases: Vec<PhaseInfo>,
    pub players: Vec<String>,
    pub config: GameConfig,
}

impl ExportMeta {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseInfo> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    /// Analysis grid for a scored phase: one step per bot tick.
    pub fn grid(&self, phase: Phase) -> Option<GridSpec> {
        let info = self.phase(phase)?;
        let step = self.config.bot_tick_seconds;
        let points = (self.config.phase_seconds / step).round() as usize;
        Some(GridSpec { start: info.start_s, step, points })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionExport {
    pub csv: String,
    pub meta: ExportMeta,
}

pub fn export_session(session: &Session) -> Result<SessionExport> {
    if session.phase() != Phase::Finished {
        return Err(GameError::NotFinished);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in session.log() {
        w.write_record([
            r.phase.as_str().to_string(),
            r.player_id.clone(),
            r.timestamp_s.to_string(),
            r.guess.to_string(),
            r.fitness.to_string(),
            r.score_delta.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| GameError::BadRequest(e.to_string()))?;
    Ok(SessionExport {
        csv: String::from_utf8(bytes).expect("csv output is utf-8"),
        meta: ExportMeta {
            session_id: session.id.clone(),
            seed: session.seed,
            phases: session.phases().to_vec(),
            players: session.player_ids().to_vec(),
            config: session.config.clone(),
        },
    })
}

/// Parses an exported event log.
pub fn read_log(csv_text: &str) -> Result<Vec<GuessRecord>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    if rdr.headers()?.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(GameError::BadRequest("unexpected export header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| GameError::BadRequest(format!("bad number '{}'", &rec[i])))
        };
        out.push(GuessRecord {
            phase: Phase::parse(&rec[0]).ok_or_else(|| GameError::BadRequest(format!("bad phase '{}'", &rec[0])))?,
            player_id: rec[1].to_string(),
            timestamp_s: num(2)?,
            guess: num(3)?,
            fitness: num(4)?,
            score_delta: num(5)? as u32,
        });
    }
    Ok(out)
}

/// Decision events of one phase, ready for `resample_to_grid`.
pub fn phase_events(log: &[GuessRecord], phase: Phase) -> Vec<DecisionEvent> {
    log.iter()
        .filter(|r| r.phase == phase)
        .map(|r| DecisionEvent::new(r.player_id.clone(), r.timestamp_s, r.guess))
        .collect()
}
