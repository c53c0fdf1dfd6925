//! Panel data pipeline: percentage series per entity and year, turned into
//! error trajectories around a consensus value, identified, and fed to the
//! influence designs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{CrowdConfig, InitSpec};
use crate::control::{default_beta_grid, optimize_beta_mc, optimize_beta_robust, RobustProblem};
use crate::dynamics::CrowdState;
use crate::error::{Error, Result};
use crate::sysid::{identify_open_loop, McFit};
use crate::trajectory::Trajectory;

/// Percentages are bounded, so the simulated state never leaves +-100 points.
pub const PANEL_STATE_BOUND: f64 = 100.0;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSeries {
    pub label: String,
    pub entity_ids: Vec<String>,
    /// Strictly increasing.
    pub years: Vec<i32>,
    /// `values[e][y]`; `None` marks a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Deserialize)]
struct PanelRow {
    entity: String,
    year: String,
    value: String,
}

impl PanelSeries {
    pub fn cell_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Reads `entity,year,value` rows. An empty value marks a missing cell.
    pub fn from_reader<R: Read>(reader: R, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["entity", "year", "value"] {
            return Err(Error::Parse { row: 1, message: "expected header entity,year,value".into() });
        }
        let mut cells: BTreeMap<(String, i32), Option<f64>> = BTreeMap::new();
        let mut entities: Vec<String> = Vec::new();
        for (k, rec) in rdr.deserialize::<PanelRow>().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            let year: i32 =
                rec.year.parse().map_err(|_| Error::Parse { row, message: format!("bad year '{}'", rec.year) })?;
            let value = if rec.value.is_empty() {
                None
            } else {
                let v: f64 = rec
                    .value
                    .parse()
                    .map_err(|_| Error::Parse { row, message: format!("non-numeric value '{}'", rec.value) })?;
                if !(0.0..=100.0).contains(&v) {
                    return Err(Error::PercentageOutOfRange { row, value: v });
                }
                Some(v)
            };
            if !entities.contains(&rec.entity) {
                entities.push(rec.entity.clone());
            }
            if cells.insert((rec.entity.clone(), year), value).is_some() {
                return Err(Error::DuplicateEntry { entity: rec.entity, year });
            }
        }
        if cells.is_empty() {
            return Err(Error::InsufficientData("panel has no rows".into()));
        }
        let years: Vec<i32> = cells.keys().map(|(_, y)| *y).collect::<BTreeSet<_>>().into_iter().collect();
        let values = entities
            .iter()
            .map(|e| years.iter().map(|y| cells.get(&(e.clone(), *y)).copied().flatten()).collect())
            .collect();
        Ok(PanelSeries { label: label.into(), entity_ids: entities, years, values })
    }

    /// Writes the long `entity,year,value` form; missing cells are left out.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["entity", "year", "value"])?;
        for (e, row) in self.entity_ids.iter().zip(&self.values) {
            for (y, v) in self.years.iter().zip(row) {
                if let Some(v) = v {
                    w.write_record([e.clone(), y.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a panel; the label defaults to the file stem.
pub fn load_panel_csv(path: &Path) -> Result<PanelSeries> {
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    PanelSeries::from_reader(std::fs::File::open(path)?, label)
}

/// Grand mean of every observed value over the trailing `window` years.
pub fn derive_theta_star(panel: &PanelSeries, window: usize) -> Result<f64> {
    if window == 0 || window > panel.years.len() {
        return Err(Error::InvalidArgument(format!(
            "window of {window} years does not fit a {}-year panel",
            panel.years.len()
        )));
    }
    let from = panel.years.len() - window;
    let vals: Vec<f64> = panel.values.iter().flat_map(|row| row[from..].iter().flatten().copied()).collect();
    if vals.is_empty() {
        return Err(Error::InsufficientData("no observations in the trailing window".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Error trajectory `value - theta*` with missing cells masked. Entities with
/// no data and years with no data are excluded.
pub fn panel_trajectory(panel: &PanelSeries, theta_star: f64) -> Result<(Trajectory, Vec<String>, Vec<i32>)> {
    let entities: Vec<usize> =
        (0..panel.entity_ids.len()).filter(|&e| panel.values[e].iter().any(Option::is_some)).collect();
    if entities.is_empty() {
        return Err(Error::NoUsableAgents);
    }
    let years: Vec<usize> =
        (0..panel.years.len()).filter(|&y| entities.iter().any(|&e| panel.values[e][y].is_some())).collect();
    let mut states = Vec::with_capacity(years.len());
    let mut mask = Vec::with_capacity(years.len());
    for (t, &y) in years.iter().enumerate() {
        let cells: Vec<Option<f64>> = entities.iter().map(|&e| panel.values[e][y]).collect();
        states.push(CrowdState::new(t, cells.iter().map(|c| c.map_or(0.0, |v| v - theta_star)).collect()));
        mask.push(cells.iter().map(Option::is_some).collect());
    }
    let traj = Trajectory::with_mask(states, mask, 0, format!("panel:{}", panel.label))?;
    Ok((
        traj,
        entities.iter().map(|&e| panel.entity_ids[e].clone()).collect(),
        years.iter().map(|&y| panel.years[y]).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOptions {
    pub window: usize,
    pub fit: McFit,
    /// Also run the Monte Carlo design on the identified model.
    pub mc_design: bool,
}

impl Default for CaseOptions {
    fn default() -> Self {
        CaseOptions {
            window: DEFAULT_WINDOW,
            fit: McFit::default().with_state_bound(PANEL_STATE_BOUND),
            mc_design: true,
        }
    }
}

/// One row of the results table. `beta_opt` and `delta_mse` come from the
/// worst-case bound; the Monte Carlo counterparts are reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub description: String,
    pub duration: String,
    pub n: usize,
    pub horizon: usize,
    pub gain_hat: f64,
    pub sigma_hat: f64,
    pub r2: f64,
    pub noise_ratio: f64,
    pub beta_opt: f64,
    pub delta_mse: f64,
    pub theta_star: f64,
    pub beta_mc: Option<f64>,
    pub delta_mse_mc: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const REPORT_HEADER: [&str; 13] = [
    "description",
    "duration",
    "n",
    "T",
    "gain_hat",
    "sigma_hat",
    "r2",
    "noise_ratio",
    "beta_opt",
    "delta_mse",
    "theta_star",
    "beta_mc",
    "delta_mse_mc",
];

impl CaseStudyReport {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        vec![
            self.description.clone(),
            self.duration.clone(),
            self.n.to_string(),
            self.horizon.to_string(),
            format!("{:.4}", self.gain_hat),
            format!("{:.4}", self.sigma_hat),
            format!("{:.4}", self.r2),
            format!("{:.4}", self.noise_ratio),
            format!("{:.4}", self.beta_opt),
            format!("{:.4}", self.delta_mse),
            format!("{:.4}", self.theta_star),
            opt(self.beta_mc),
            opt(self.delta_mse_mc),
        ]
    }

    pub fn write_csv<W: Write>(reports: &[CaseStudyReport], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REPORT_HEADER)?;
        for r in reports {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn analyze(panel: &PanelSeries, options: &CaseOptions) -> Result<CaseStudyReport> {
    let theta_star = derive_theta_star(panel, options.window)?;
    let (traj, entities, years) = panel_trajectory(panel, theta_star)?;
    let duration = format!("{}-{}", years[0], years[years.len() - 1]);
    let mut report = CaseStudyReport {
        description: panel.label.clone(),
        duration,
        n: entities.len(),
        horizon: traj.horizon(),
        gain_hat: 0.0,
        sigma_hat: 0.0,
        r2: 1.0,
        noise_ratio: 0.0,
        beta_opt: 0.0,
        delta_mse: 0.0,
        theta_star,
        beta_mc: None,
        delta_mse_mc: None,
        converged: true,
        note: None,
    };
    let mse0 = traj.mse[0];
    if traj.mse.iter().all(|&m| m <= 1e-12 * (1.0 + theta_star * theta_star)) {
        report.note = Some("panel has already converged; nothing to identify".into());
        if options.mc_design {
            report.beta_mc = Some(0.0);
            report.delta_mse_mc = Some(0.0);
        }
        return Ok(report);
    }

    let fit = identify_open_loop(&traj, &options.fit)?;
    report.gain_hat = fit.gain_hat;
    report.sigma_hat = fit.sigma_hat;
    report.r2 = fit.r2;
    report.converged = fit.converged;
    report.noise_ratio = fit.sigma_hat.powi(2) / mse0;

    let robust = optimize_beta_robust(&RobustProblem::new(fit.gain_hat, report.noise_ratio, traj.horizon())?)?;
    report.beta_opt = robust.beta.unwrap_or(0.0);
    report.delta_mse = robust.delta_mse;

    if options.mc_design {
        let x0 = traj.initial_crowd();
        let cfg = CrowdConfig::uniform(x0.len(), fit.gain_hat, fit.sigma_hat, mse0)
            .with_init(InitSpec::Explicit { x: x0 })
            .with_state_bound(options.fit.state_bound);
        let sweep = optimize_beta_mc(&cfg, traj.horizon(), options.fit.spec, &default_beta_grid())?;
        report.beta_mc = sweep.design.beta;
        report.delta_mse_mc = Some(sweep.design.delta_mse);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(csv: &str) -> Result<PanelSeries> {
        PanelSeries::from_reader(csv.as_bytes(), "test")
    }

    #[test]
    fn complete_panel_loads() {
        let mut s = String::from("entity,year,value\n");
        for e in ["AL", "AK", "AZ"] {
            for y in 2000..2005 {
                s.push_str(&format!("{e},{y},{}\n", 3.0 + (y - 2000) as f64 * 0.1));
            }
        }
        let p = panel(&s).unwrap();
        assert_eq!(p.cell_count(), 15);
        assert_eq!(p.missing_count(), 0);
        assert_eq!(p.years, vec![2000, 2001, 2002, 2003, 2004]);
        assert_eq!(p.entity_ids, vec!["AL", "AK", "AZ"]);
    }

    #[test]
    fn validation_errors() {
        let dup = panel("entity,year,value\nAL,2000,3\nAL,2000,4\n").unwrap_err();
        assert!(matches!(&dup, Error::DuplicateEntry { entity, year: 2000 } if entity == "AL"));
        assert!(dup.to_string().contains("AL"));
        let big = panel("entity,year,value\nAL,2000,104\n").unwrap_err();
        assert!(big.to_string().contains("percentage out of range"));
        let bad = panel("entity,year,value\nAL,2000,3\nAK,2000,abc\n").unwrap_err();
        assert!(matches!(bad, Error::Parse { row: 3, .. }));
    }

    #[test]
    fn missing_cells_are_flagged() {
        let p = panel("entity,year,value\nA,1,3\nA,2,\nB,1,5\nB,2,4\n").unwrap();
        assert_eq!(p.missing_count(), 1);
        let (tr, _, _) = panel_trajectory(&p, 4.0).unwrap();
        assert!(!tr.is_present(1, 0));
        assert_eq!(tr.mse[1], 0.0);
        assert_eq!(tr.mse[0], 1.0);
    }

    #[test]
    fn theta_star_examples() {
        let constant = panel("entity,year,value\nA,1,4\nA,2,4\nB,1,4\nB,2,4\n").unwrap();
        assert_eq!(derive_theta_star(&constant, 2).unwrap(), 4.0);
        let sym = panel("entity,year,value\nA,1,9\nA,2,3\nB,1,0\nB,2,5\n").unwrap();
        assert_eq!(derive_theta_star(&sym, 1).unwrap(), 4.0);
        assert!(derive_theta_star(&sym, 3).is_err());
        assert!(derive_theta_star(&sym, 0).is_err());
    }

    #[test]
    fn converged_panel_reports_no_influence() {
        let mut s = String::from("entity,year,value\n");
        for e in 0..5 {
            for y in 0..12 {
                s.push_str(&format!("E{e},{y},4.0\n"));
            }
        }
        let r = analyze(&panel(&s).unwrap(), &CaseOptions::default()).unwrap();
        assert_eq!(r.sigma_hat, 0.0);
        assert_eq!(r.beta_opt, 0.0);
        assert!(r.note.is_some());
    }

    #[test]
    fn report_csv_columns() {
        let r = CaseStudyReport {
            description: "Total Gen Sales Tax (T09)".into(),
            duration: "1942-2010".into(),
            n: 50,
            horizon: 69,
            gain_hat: 0.96,
            sigma_hat: 0.82,
            r2: 0.97,
            noise_ratio: 0.03,
            beta_opt: 0.35,
            delta_mse: 0.73,
            theta_star: 30.0,
            beta_mc: None,
            delta_mse_mc: None,
            converged: true,
            note: None,
        };
        let mut out = Vec::new();
        CaseStudyReport::write_csv(&[r], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER.join(","));
        assert!(lines[1].starts_with("Total Gen Sales Tax (T09),1942-2010,50,69,0.9600,0.8200,"));
    }
}
