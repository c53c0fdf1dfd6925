//! Trajectories and their long-format CSV representation.
//!
//! CSV layout is `t,agent_id,x`, one row per observed cell, with floats written
//! to 17 significant digits so that files round-trip bit-exactly. A sidecar
//! JSON record carries the generating parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{CrowdConfig, InfluencePolicy};
use crate::dynamics::CrowdState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<CrowdState>,
    /// `mask[t][i]` is false where agent `i` has no observation at step `t`.
    /// `None` means every cell is observed.
    pub mask: Option<Vec<Vec<bool>>>,
    pub mse: Vec<f64>,
    pub cost: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl Trajectory {
    /// Fully observed trajectory.
    pub fn from_states(states: Vec<CrowdState>, seed: u64, config_digest: String) -> Self {
        let mse: Vec<f64> = states.iter().map(CrowdState::mse).collect();
        let cost = mse.iter().sum();
        Trajectory { states, mask: None, mse, cost, seed, config_digest }
    }

    /// Trajectory with missing cells. Masked entries of `states` are ignored
    /// and stored as zero.
    pub fn with_mask(
        mut states: Vec<CrowdState>,
        mask: Vec<Vec<bool>>,
        seed: u64,
        config_digest: String,
    ) -> Result<Self> {
        if mask.len() != states.len() {
            return Err(Error::InvalidArgument("mask and states differ in length".into()));
        }
        let mut mse = Vec::with_capacity(states.len());
        for (t, (s, m)) in states.iter_mut().zip(&mask).enumerate() {
            if m.len() != s.x.len() {
                return Err(Error::InvalidArgument(format!("mask row {t} has the wrong width")));
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            for (v, &present) in s.x.iter_mut().zip(m) {
                if present {
                    sum += *v * *v;
                    count += 1;
                } else {
                    *v = 0.0;
                }
            }
            if count == 0 {
                return Err(Error::InsufficientData(format!("no observed agents at step {t}")));
            }
            mse.push(sum / count as f64);
        }
        let cost = mse.iter().sum();
        let mask = if mask.iter().all(|row| row.iter().all(|&p| p)) { None } else { Some(mask) };
        Ok(Trajectory { states, mask, mse, cost, seed, config_digest })
    }

    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |s| s.x.len())
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn is_present(&self, t: usize, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[t][i])
    }

    /// Observed `(agent, x)` pairs at step `t`.
    pub fn observed(&self, t: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.states[t].x.iter().enumerate().filter(move |(i, _)| self.is_present(t, *i)).map(|(i, &x)| (i, x))
    }

    /// Population feedback over observed agents at step `t`.
    pub fn feedback(&self, t: usize) -> Option<f64> {
        let (sum, count) = self.observed(t).fold((0.0, 0usize), |(s, c), (_, x)| (s + x, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Errors of the agents observed at t = 0.
    pub fn initial_crowd(&self) -> Vec<f64> {
        if self.states.is_empty() {
            return Vec::new();
        }
        self.observed(0).map(|(_, x)| x).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "agent_id", "x"])?;
        for (t, s) in self.states.iter().enumerate() {
            for (i, x) in s.x.iter().enumerate() {
                if self.is_present(t, i) {
                    w.write_record([t.to_string(), i.to_string(), fmt_f64(*x)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a long-format CSV. `n` fixes the crowd size when known (agents
    /// with no rows are then masked out everywhere); otherwise it is inferred.
    pub fn read_csv<R: Read>(reader: R, n: Option<usize>, seed: u64, config_digest: String) -> Result<Trajectory> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "agent_id", "x"] {
            return Err(Error::Parse { row: 1, message: format!("expected header t,agent_id,x, got {headers:?}") });
        }
        let mut cells = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec?;
            let field = |j: usize| rec.get(j).unwrap_or("").trim();
            let t: usize = field(0).parse().map_err(|e| Error::Parse { row, message: format!("t: {e}") })?;
            let i: usize = field(1).parse().map_err(|e| Error::Parse { row, message: format!("agent_id: {e}") })?;
            let x: f64 = field(2).parse().map_err(|e| Error::Parse { row, message: format!("x: {e}") })?;
            if !x.is_finite() {
                return Err(Error::Parse { row, message: "x is not finite".into() });
            }
            cells.push((t, i, x, row));
        }
        if cells.is_empty() {
            return Err(Error::NoUsableAgents);
        }
        let horizon = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
        let inferred = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
        let n = match n {
            Some(n) if n < inferred => {
                return Err(Error::Parse { row: 0, message: format!("agent_id {} exceeds n = {n}", inferred - 1) })
            }
            Some(n) => n,
            None => inferred,
        };
        let mut states: Vec<CrowdState> = (0..horizon).map(|t| CrowdState::new(t, vec![0.0; n])).collect();
        let mut mask = vec![vec![false; n]; horizon];
        for (t, i, x, row) in cells {
            if mask[t][i] {
                return Err(Error::Parse { row, message: format!("duplicate cell (t={t}, agent={i})") });
            }
            mask[t][i] = true;
            states[t].x[i] = x;
        }
        Trajectory::with_mask(states, mask, seed, config_digest)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sidecar metadata written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub n: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<InfluencePolicy>,
    pub config_digest: String,
}

impl TrajectoryMeta {
    pub fn for_run(traj: &Trajectory, config: &CrowdConfig, policy: &InfluencePolicy) -> Self {
        TrajectoryMeta {
            n: traj.n(),
            horizon: traj.horizon(),
            gains: Some(config.gains.clone()),
            noise_sigma: Some(config.noise_sigma),
            seed: traj.seed,
            policy: Some(policy.clone()),
            config_digest: traj.config_digest.clone(),
        }
    }

    pub fn bare(traj: &Trajectory) -> Self {
        TrajectoryMeta {
            n: traj.n(),
            horizon: traj.horizon(),
            gains: None,
            noise_sigma: None,
            seed: traj.seed,
            policy: None,
            config_digest: traj.config_digest.clone(),
        }
    }
}

/// `run.csv` -> `run.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn save(traj: &Trajectory, meta: &TrajectoryMeta, csv_path: &Path) -> Result<PathBuf> {
    traj.write_csv(BufWriter::new(File::create(csv_path)?))?;
    let meta_path = sidecar_path(csv_path);
    let mut f = BufWriter::new(File::create(&meta_path)?);
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.flush()?;
    Ok(meta_path)
}

/// Loads a trajectory CSV, using its sidecar when present.
pub fn load(csv_path: &Path) -> Result<(Trajectory, Option<TrajectoryMeta>)> {
    let meta_path = sidecar_path(csv_path);
    let meta: Option<TrajectoryMeta> = if meta_path.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(&meta_path)?))?)
    } else {
        None
    };
    let (n, seed, digest) = match &meta {
        Some(m) => (Some(m.n), m.seed, m.config_digest.clone()),
        None => (None, 0, String::new()),
    };
    let traj = Trajectory::read_csv(BufReader::new(File::open(csv_path)?), n, seed, digest)?;
    Ok((traj, meta))
}
