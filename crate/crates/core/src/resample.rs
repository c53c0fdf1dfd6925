//! Mapping asynchronous decision logs onto the discrete-time grid.
//!
//! Grid step `k` covers `[start + k*step, start + (k+1)*step)`. An agent's
//! state at step `k` is its most recent decision strictly before the end of
//! that bin, minus `theta*` (last observation carried forward). Agents that
//! have not decided yet are excluded from that step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::CrowdState;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub agent: String,
    pub timestamp: f64,
    pub decision: f64,
}

impl DecisionEvent {
    pub fn new(agent: impl Into<String>, timestamp: f64, decision: f64) -> Self {
        DecisionEvent { agent: agent.into(), timestamp, decision }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub step: f64,
    pub points: usize,
}

impl GridSpec {
    /// `points` equal bins over `[start, start + duration)`.
    pub fn spanning(start: f64, duration: f64, points: usize) -> Self {
        GridSpec { start, step: duration / points as f64, points }
    }

    fn bin_end(&self, k: usize) -> f64 {
        self.start + (k + 1) as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.bin_end(self.points.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct Resampled {
    pub trajectory: Trajectory,
    /// Agent label for each trajectory column.
    pub agents: Vec<String>,
    /// Agents with no decision inside the grid window.
    pub dropped_agents: usize,
    /// Leading grid steps skipped because nobody had decided yet.
    pub trimmed_steps: usize,
}

pub fn resample_to_grid(events: &[DecisionEvent], grid: GridSpec, theta_star: f64) -> Result<Resampled> {
    let roster: Vec<String> = {
        let mut seen = BTreeMap::new();
        for e in events {
            let next = seen.len();
            seen.entry(e.agent.as_str()).or_insert(next);
        }
        let mut v: Vec<(&str, usize)> = seen.into_iter().collect();
        v.sort_by_key(|(_, first)| *first);
        v.into_iter().map(|(a, _)| a.to_string()).collect()
    };
    resample_with_roster(events, &roster, grid, theta_star)
}

/// Like [`resample_to_grid`] with a fixed roster; roster members without
/// decisions in the window are dropped and counted.
pub fn resample_with_roster(
    events: &[DecisionEvent],
    roster: &[String],
    grid: GridSpec,
    theta_star: f64,
) -> Result<Resampled> {
    if grid.points == 0 {
        return Err(Error::EmptyHorizon);
    }
    if !(grid.step > 0.0 && grid.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {}", grid.step)));
    }
    if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::InvalidArgument("events must be sorted by timestamp".into()));
    }
    let end = grid.end();
    let index: BTreeMap<&str, usize> = roster.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut seen = vec![false; roster.len()];
    for e in events.iter().filter(|e| e.timestamp < end) {
        if let Some(&i) = index.get(e.agent.as_str()) {
            seen[i] = true;
        }
    }
    let kept: Vec<usize> = (0..roster.len()).filter(|&i| seen[i]).collect();
    if kept.is_empty() {
        return Err(Error::NoUsableAgents);
    }
    let column: BTreeMap<usize, usize> = kept.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let n = kept.len();

    let mut latest: Vec<Option<f64>> = vec![None; n];
    let mut cursor = 0;
    let mut states = Vec::with_capacity(grid.points);
    let mut mask = Vec::with_capacity(grid.points);
    let mut trimmed = 0;
    for k in 0..grid.points {
        let bin_end = grid.bin_end(k);
        while cursor < events.len() && events[cursor].timestamp < bin_end {
            let e = &events[cursor];
            if let Some(c) = index.get(e.agent.as_str()).and_then(|i| column.get(i)) {
                latest[*c] = Some(e.decision - theta_star);
            }
            cursor += 1;
        }
        if states.is_empty() && latest.iter().all(Option::is_none) {
            trimmed += 1;
            continue;
        }
        let t = states.len();
        states.push(CrowdState::new(t, latest.iter().map(|v| v.unwrap_or(0.0)).collect()));
        mask.push(latest.iter().map(Option::is_some).collect());
    }
    let trajectory = Trajectory::with_mask(states, mask, 0, String::from("resampled"))?;
    Ok(Resampled {
        trajectory,
        agents: kept.iter().map(|&i| roster[i].clone()).collect(),
        dropped_agents: roster.len() - n,
        trimmed_steps: trimmed,
    })
}
