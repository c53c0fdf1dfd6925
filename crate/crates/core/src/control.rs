//! Optimal degree of social influence.
//!
//! With uniform gain `g` and influence `beta` the expected MSE obeys
//!
//! ```text
//! E[MSE(t+1)] <= m^2 * MSE(t) + (1 - beta)^2 * sigma^2,   m = (1 - beta) * g + beta
//! ```
//!
//! Summing the iterated bound over a horizon gives a closed-form worst case
//! for the cumulative cost, which the robust design minimizes. The Monte
//! Carlo designs minimize the simulated expected cost instead, with common
//! random numbers across candidates.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CrowdConfig, InfluencePolicy, MAX_INFLUENCE};
use crate::error::{Error, Result};
use crate::grid::{argmin, grid_then_refine, range_inclusive};
use crate::montecarlo::{evaluate, McEstimate, McSpec};

/// Grid step used by the one-dimensional optimizers.
pub const BETA_GRID_STEP: f64 = 1e-3;
/// Absolute precision of refined optima.
pub const BETA_TOLERANCE: f64 = 1e-4;

fn check_gain(gain: f64) -> Result<()> {
    if gain > 0.0 && gain < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gain must lie in (0, 1), got {gain}")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidInfluence(beta))
    }
}

/// `m = (1 - beta) * g + beta`.
pub fn contraction_factor(gain: f64, beta: f64) -> Result<f64> {
    check_gain(gain)?;
    check_beta(beta)?;
    Ok((1.0 - beta) * gain + beta)
}

/// One step of the expected-MSE bound: `m^2 * mse + (1 - beta)^2 * sigma^2`.
pub fn mse_bound_step(mse: f64, gain: f64, beta: f64, sigma: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(Error::InvalidArgument(format!("mse must be nonnegative, got {mse}")));
    }
    let m = contraction_factor(gain, beta)?;
    Ok(m * m * mse + (1.0 - beta).powi(2) * sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustProblem {
    pub gain: f64,
    /// `sigma^2 / MSE(0)`.
    pub noise_ratio: f64,
    pub horizon: usize,
}

impl RobustProblem {
    pub fn new(gain: f64, noise_ratio: f64, horizon: usize) -> Result<Self> {
        let p = RobustProblem { gain, noise_ratio, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_gain(self.gain)?;
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise ratio must be >= 0, got {}", self.noise_ratio)));
        }
        if self.horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        Ok(())
    }
}

/// Worst-case cumulative cost over the horizon, normalized by MSE(0):
///
/// ```text
/// S + (T - S) * (1 - beta)^2 / (1 - m^2) * ratio,   S = (1 - m^(2T)) / (1 - m^2)
/// ```
pub fn robust_cost_bound(problem: &RobustProblem, beta: f64) -> Result<f64> {
    problem.validate()?;
    check_beta(beta)?;
    let m = (1.0 - beta) * problem.gain + beta;
    if m >= 1.0 {
        return Err(Error::NotContraction(m));
    }
    let m2 = m * m;
    let t = problem.horizon as f64;
    let geometric = (1.0 - m2.powi(problem.horizon as i32)) / (1.0 - m2);
    Ok(geometric + (t - geometric) * (1.0 - beta).powi(2) / (1.0 - m2) * problem.noise_ratio)
}

/// Normalized bound on E[MSE(t)] / MSE(0) obtained by iterating the one-step bound.
pub fn iterated_mse_bound(problem: &RobustProblem, beta: f64, t: usize) -> Result<f64> {
    problem.validate()?;
    let m = contraction_factor(problem.gain, beta)?;
    let m2t = (m * m).powi(t as i32);
    Ok(m2t + (1.0 - beta).powi(2) * problem.noise_ratio * (1.0 - m2t) / (1.0 - m * m))
}

/// Fractional reduction of cumulative cost relative to open loop.
pub fn delta_mse(cost_open: f64, cost_soft: f64) -> Result<f64> {
    if !(cost_open > 0.0) {
        return Err(Error::InvalidArgument(format!("open-loop cost must be positive, got {cost_open}")));
    }
    Ok(1.0 - cost_soft / cost_open)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Constant,
    DistanceProfile,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMethod {
    /// Minimizes the closed-form worst-case bound.
    Bound,
    /// Minimizes a Monte Carlo estimate of the expected cost.
    MonteCarlo,
}

/// An influence design with its predicted cost and improvement over open loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceDesign {
    pub kind: DesignKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    /// Bound value (normalized by MSE(0)) or MC mean cumulative cost.
    pub predicted_cost: f64,
    pub delta_mse: f64,
    pub method: DesignMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Standard error of the MC cost estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl InfluenceDesign {
    /// The influence policy this design prescribes.
    pub fn policy(&self) -> InfluencePolicy {
        match self.kind {
            DesignKind::Constant => match self.beta {
                Some(b) if b > 0.0 => InfluencePolicy::Constant { beta: b },
                _ => InfluencePolicy::Off,
            },
            DesignKind::DistanceProfile => InfluencePolicy::DistanceProfile { c: self.c.unwrap_or(f64::INFINITY) },
            DesignKind::Dynamic => InfluencePolicy::Schedule { betas: self.schedule.clone().unwrap_or_default() },
        }
    }
}

/// Candidate weights `0, 0.001, ..., 0.999` plus the upper admissible bound.
pub fn beta_search_grid() -> Vec<f64> {
    let mut g = range_inclusive(0.0, 0.999, BETA_GRID_STEP).expect("static grid");
    g.push(MAX_INFLUENCE);
    g
}

/// Robust constant design minimizing [`robust_cost_bound`].
pub fn optimize_beta_robust(problem: &RobustProblem) -> Result<InfluenceDesign> {
    problem.validate()?;
    let bound = |b: f64| robust_cost_bound(problem, b).unwrap_or(f64::INFINITY);
    let (beta, cost) = grid_then_refine(bound, &beta_search_grid(), BETA_TOLERANCE / 10.0)?;
    let open = robust_cost_bound(problem, 0.0)?;
    Ok(InfluenceDesign {
        kind: DesignKind::Constant,
        beta: Some(beta),
        c: None,
        schedule: None,
        predicted_cost: cost,
        delta_mse: delta_mse(open, cost)?,
        method: DesignMethod::Bound,
        replicates: None,
        seed: None,
        std_error: None,
    })
}

/// Result of a Monte Carlo sweep: the chosen design plus every grid estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSweep {
    pub design: InfluenceDesign,
    pub grid: Vec<f64>,
    pub costs: Vec<f64>,
    pub open_loop: McEstimate,
}

fn mc_sweep(
    config: &CrowdConfig,
    horizon: usize,
    spec: McSpec,
    grid: &[f64],
    kind: DesignKind,
    policy_for: impl Fn(f64) -> InfluencePolicy,
) -> Result<McSweep> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut policies = vec![InfluencePolicy::Off];
    policies.extend(grid.iter().map(|&v| policy_for(v)));
    let mut estimates = evaluate(config, horizon, spec, &policies)?;
    let open_loop = estimates.remove(0);
    let costs: Vec<f64> = estimates.iter().map(|e| e.mean_cost).collect();
    let i = argmin(&costs).ok_or(Error::EmptyGrid)?;
    let best = &estimates[i];
    let (beta, c) = match kind {
        DesignKind::Constant => (Some(grid[i]), None),
        _ => (None, Some(grid[i])),
    };
    let design = InfluenceDesign {
        kind,
        beta,
        c,
        schedule: None,
        predicted_cost: best.mean_cost,
        delta_mse: delta_mse(open_loop.mean_cost, best.mean_cost)?,
        method: DesignMethod::MonteCarlo,
        replicates: Some(spec.replicates),
        seed: Some(spec.seed),
        std_error: Some(best.cost_std_error),
    };
    Ok(McSweep { design, grid: grid.to_vec(), costs, open_loop })
}

/// Default constant-influence grid for Monte Carlo searches: 0, 0.01, ..., 0.99.
pub fn default_beta_grid() -> Vec<f64> {
    range_inclusive(0.0, 0.99, 0.01).expect("static grid")
}

/// Default distance-profile grid: c = 0.002, 0.003, ..., 0.1 (per decision unit).
pub fn default_profile_grid() -> Vec<f64> {
    range_inclusive(0.002, 0.1, 0.001).expect("static grid")
}

/// Constant design minimizing the Monte Carlo expected cost over `beta_grid`.
pub fn optimize_beta_mc(config: &CrowdConfig, horizon: usize, spec: McSpec, beta_grid: &[f64]) -> Result<McSweep> {
    for &b in beta_grid {
        check_beta(b)?;
    }
    mc_sweep(config, horizon, spec, beta_grid, DesignKind::Constant, |b| {
        if b == 0.0 {
            InfluencePolicy::Off
        } else {
            InfluencePolicy::Constant { beta: b }
        }
    })
}

/// Distance-profile design `beta(d) = exp(-c d)` minimizing the Monte Carlo cost.
pub fn optimize_profile_mc(config: &CrowdConfig, horizon: usize, spec: McSpec, c_grid: &[f64]) -> Result<McSweep> {
    if let Some(c) = c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!("profile rate must be positive, got {c}")));
    }
    mc_sweep(config, horizon, spec, c_grid, DesignKind::DistanceProfile, |c| InfluencePolicy::DistanceProfile { c })
}

/// Greedy time-varying design on the bound recursion.
///
/// Starting from the normalized bound state `M(0) = 1`, each step picks the
/// weight minimizing `m(beta)^2 * M(t) + (1 - beta)^2 * ratio` and carries that
/// minimum forward. The one-step map is increasing in `M`, so the greedy
/// schedule's cumulative bound never exceeds that of any constant weight.
pub fn robust_dynamic_schedule(problem: &RobustProblem) -> Result<InfluenceDesign> {
    problem.validate()?;
    let grid = beta_search_grid();
    let g = problem.gain;
    let r = problem.noise_ratio;
    let mut state = 1.0;
    let mut cost = 0.0;
    let mut schedule = Vec::with_capacity(problem.horizon);
    for _ in 0..problem.horizon {
        cost += state;
        let step = |b: f64| {
            let m = (1.0 - b) * g + b;
            m * m * state + (1.0 - b).powi(2) * r
        };
        let (beta, next) = grid_then_refine(step, &grid, 1e-7)?;
        schedule.push(beta);
        state = next;
    }
    let open = robust_cost_bound(problem, 0.0)?;
    Ok(InfluenceDesign {
        kind: DesignKind::Dynamic,
        beta: None,
        c: None,
        schedule: Some(schedule),
        predicted_cost: cost,
        delta_mse: delta_mse(open, cost)?,
        method: DesignMethod::Bound,
        replicates: None,
        seed: None,
        std_error: None,
    })
}

/// Cumulative normalized bound of a time-varying schedule (step t uses `schedule[t]`).
pub fn schedule_bound_cost(problem: &RobustProblem, schedule: &[f64]) -> Result<f64> {
    problem.validate()?;
    let mut state = 1.0;
    let mut cost = 0.0;
    for t in 0..problem.horizon {
        cost += state;
        if t + 1 < problem.horizon {
            let b = *schedule.get(t).ok_or_else(|| Error::InvalidArgument("schedule too short".into()))?;
            let m = contraction_factor(problem.gain, b)?;
            state = m * m * state + (1.0 - b).powi(2) * problem.noise_ratio;
        }
    }
    Ok(cost)
}

/// Robust optimum over a (gain, noise ratio) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub gains: Vec<f64>,
    pub ratios: Vec<f64>,
    pub horizon: usize,
    /// `beta[i][j]` is the robust optimum at `gains[i]`, `ratios[j]`.
    pub beta: Vec<Vec<f64>>,
}

impl PhaseDiagram {
    /// First row holds the ratio grid, first column the gain grid; cells to 4 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gain\\ratio");
        for r in &self.ratios {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
        for (g, row) in self.gains.iter().zip(&self.beta) {
            let _ = write!(out, "{g}");
            for b in row {
                let _ = write!(out, ",{b:.4}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn phase_diagram(gains: &[f64], ratios: &[f64], horizon: usize) -> Result<PhaseDiagram> {
    if gains.is_empty() || ratios.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let beta = gains
        .par_iter()
        .map(|&g| {
            ratios
                .iter()
                .map(|&r| Ok(optimize_beta_robust(&RobustProblem::new(g, r, horizon)?)?.beta.unwrap_or(0.0)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseDiagram { gains: gains.to_vec(), ratios: ratios.to_vec(), horizon, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_examples() {
        assert_eq!(contraction_factor(0.75, 0.0).unwrap(), 0.75);
        assert!((contraction_factor(0.75, 0.32).unwrap() - 0.83).abs() < 1e-12);
        assert!(contraction_factor(0.75, MAX_INFLUENCE).unwrap() > 0.99999);
        assert!(contraction_factor(1.0, 0.1).is_err());
        assert!(contraction_factor(0.5, 1.0).is_err());
        assert!(contraction_factor(0.5, -0.2).is_err());
    }

    #[test]
    fn bound_step_examples() {
        assert_eq!(mse_bound_step(100.0, 0.75, 0.0, 60.0).unwrap(), 3656.25);
        assert_eq!(mse_bound_step(100.0, 0.75, 0.0, 0.0).unwrap(), 0.5625 * 100.0);
        assert_eq!(mse_bound_step(0.0, 0.75, 0.5, 60.0).unwrap(), 900.0);
        assert!(mse_bound_step(-1.0, 0.75, 0.0, 60.0).is_err());
    }

    #[test]
    fn horizon_one_bound_is_one() {
        for (g, b, r) in [(0.75, 0.0, 0.05), (0.2, 0.9, 3.0), (0.99, 0.5, 0.0)] {
            let p = RobustProblem::new(g, r, 1).unwrap();
            assert!((robust_cost_bound(&p, b).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_optimum_is_zero() {
        let d = optimize_beta_robust(&RobustProblem::new(0.75, 0.0, 30).unwrap()).unwrap();
        assert_eq!(d.beta, Some(0.0));
        assert_eq!(d.delta_mse, 0.0);
        let s = robust_dynamic_schedule(&RobustProblem::new(0.9, 0.0, 20).unwrap()).unwrap();
        assert!(s.schedule.unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn delta_mse_examples() {
        assert!((delta_mse(100.0, 71.0).unwrap() - 0.29).abs() < 1e-12);
        assert_eq!(delta_mse(100.0, 100.0).unwrap(), 0.0);
        assert!((delta_mse(100.0, 53.0).unwrap() - 0.47).abs() < 1e-12);
        assert!(delta_mse(0.0, 1.0).is_err());
    }

    #[test]
    fn invalid_problems_are_rejected() {
        assert!(RobustProblem::new(1.0, 0.1, 10).is_err());
        assert!(RobustProblem::new(0.5, -0.1, 10).is_err());
        assert!(RobustProblem::new(0.5, 0.1, 0).is_err());
    }

    #[test]
    fn mc_grid_validation() {
        let cfg = CrowdConfig::uniform(3, 0.75, 1.0, 100.0);
        let spec = McSpec::new(10, 1);
        assert!(matches!(optimize_beta_mc(&cfg, 5, spec, &[]), Err(Error::EmptyGrid)));
        assert!(optimize_beta_mc(&cfg, 5, spec, &[0.1, 1.0]).is_err());
        assert!(optimize_profile_mc(&cfg, 5, spec, &[0.01, 0.0]).is_err());
    }

    #[test]
    fn phase_csv_layout() {
        let d = phase_diagram(&[0.5, 0.9], &[0.0, 0.1], 30).unwrap();
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "gain\\ratio,0,0.1");
        assert!(lines[1].starts_with("0.5,0.0000,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn design_json_shape() {
        let d = optimize_beta_robust(&RobustProblem::new(0.75, 0.05, 30).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "constant");
        assert_eq!(v["method"], "bound");
        assert!(v.get("c").is_none());
        assert!(v["beta"].as_f64().is_some());
    }
}
