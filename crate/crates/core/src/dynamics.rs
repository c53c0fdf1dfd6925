//! Open-loop and soft-feedback crowd dynamics.
//!
//! All updates are synchronous: the population feedback `u(t)` is taken from
//! the state before any agent moves, and every new state is clamped to
//! `[-state_bound, state_bound]`.

use serde::{Deserialize, Serialize};

use crate::config::{config_digest, profile_weight, CrowdConfig, InfluencePolicy};
use crate::error::{Error, Result};
use crate::rng::{fill_standard, stream_rng, StreamRng};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdState {
    pub t: usize,
    /// Decision errors `z_i - theta*`.
    pub x: Vec<f64>,
}

impl CrowdState {
    pub fn new(t: usize, x: Vec<f64>) -> Self {
        CrowdState { t, x }
    }

    pub fn mse(&self) -> f64 {
        mean_square(&self.x)
    }
}

/// Population feedback `u = mean(x)`.
pub fn population_feedback(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn check_lengths(state: &CrowdState, config: &CrowdConfig, noise: &[f64]) -> Result<()> {
    if state.x.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if noise.len() != state.x.len() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} entries for {} agents",
            noise.len(),
            state.x.len()
        )));
    }
    if config.gains.len() != 1 && config.gains.len() != state.x.len() {
        return Err(Error::InvalidConfig("gain count does not match the state".into()));
    }
    Ok(())
}

/// `x_i(t+1) = g_i * x_i(t) + w_i(t)`, clamped.
pub fn open_loop_step(state: &CrowdState, config: &CrowdConfig, noise: &[f64]) -> Result<CrowdState> {
    check_lengths(state, config, noise)?;
    let mut out = vec![0.0; state.x.len()];
    step_into(&state.x, &mut out, config, &InfluencePolicy::Off, state.t, noise, None)?;
    Ok(CrowdState::new(state.t + 1, out))
}

/// `x_i(t+1) = (1 - beta_i) * (g_i * x_i(t) + w_i(t)) + beta_i * u(t)`, clamped.
pub fn soft_feedback_step(
    state: &CrowdState,
    config: &CrowdConfig,
    policy: &InfluencePolicy,
    noise: &[f64],
) -> Result<CrowdState> {
    check_lengths(state, config, noise)?;
    policy.validate()?;
    let mut out = vec![0.0; state.x.len()];
    step_into(&state.x, &mut out, config, policy, state.t, noise, None)?;
    Ok(CrowdState::new(state.t + 1, out))
}

/// Soft-feedback step against an externally supplied feedback `u` (in error
/// units) instead of the mean of `state`, e.g. when the crowd includes agents
/// outside the simulated population.
pub fn feedback_step(
    state: &CrowdState,
    config: &CrowdConfig,
    policy: &InfluencePolicy,
    noise: &[f64],
    u: f64,
) -> Result<CrowdState> {
    check_lengths(state, config, noise)?;
    policy.validate()?;
    if !u.is_finite() {
        return Err(Error::InvalidArgument(format!("feedback must be finite, got {u}")));
    }
    let mut out = vec![0.0; state.x.len()];
    step_into(&state.x, &mut out, config, policy, state.t, noise, Some(u))?;
    Ok(CrowdState::new(state.t + 1, out))
}

/// One synchronous update of `x` into `out`; `noise` is in decision units.
/// `feedback` overrides the population mean when given.
pub(crate) fn step_into(
    x: &[f64],
    out: &mut [f64],
    config: &CrowdConfig,
    policy: &InfluencePolicy,
    t: usize,
    noise: &[f64],
    feedback: Option<f64>,
) -> Result<()> {
    let bound = config.state_bound;
    let own = |i: usize| config.gain(i) * x[i];
    match policy {
        InfluencePolicy::Off => {
            for i in 0..x.len() {
                out[i] = (own(i) + noise[i]).clamp(-bound, bound);
            }
        }
        InfluencePolicy::Constant { .. } | InfluencePolicy::Schedule { .. } => {
            let beta = policy.weight(t, 0.0)?;
            if beta == 0.0 {
                return step_into(x, out, config, &InfluencePolicy::Off, t, noise, None);
            }
            let u = match feedback {
                Some(u) => u,
                None => population_feedback(x)?,
            };
            for i in 0..x.len() {
                out[i] = ((1.0 - beta) * (own(i) + noise[i]) + beta * u).clamp(-bound, bound);
            }
        }
        InfluencePolicy::DistanceProfile { c } => {
            let u = match feedback {
                Some(u) => u,
                None => population_feedback(x)?,
            };
            for i in 0..x.len() {
                let gx = own(i);
                let beta = profile_weight(*c, (gx - u).abs());
                out[i] = ((1.0 - beta) * (gx + noise[i]) + beta * u).clamp(-bound, bound);
            }
        }
    }
    Ok(())
}

/// Initial errors and per-step noise for one run, in decision units.
///
/// Draw order is fixed (initial errors first, then noise for steps
/// `0..horizon-1`), which is what makes runs on the same stream comparable
/// across policies and noise levels.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x0: Vec<f64>,
    noise: Vec<f64>,
    n: usize,
}

impl Scenario {
    pub fn draw(config: &CrowdConfig, horizon: usize, rng: &mut StreamRng) -> Scenario {
        let n = config.n;
        let x0 = config.init.realize(n, config.state_bound, rng);
        let mut noise = vec![0.0; n * horizon.saturating_sub(1)];
        fill_standard(rng, config.noise_dist, &mut noise);
        noise.iter_mut().for_each(|w| *w *= config.noise_sigma);
        Scenario { x0, noise, n }
    }

    pub fn horizon(&self) -> usize {
        self.noise.len() / self.n.max(1) + 1
    }

    pub fn noise_at(&self, t: usize) -> &[f64] {
        &self.noise[t * self.n..(t + 1) * self.n]
    }

    /// Runs `policy` over the scenario, handing each state to `observe`.
    pub fn run(
        &self,
        config: &CrowdConfig,
        policy: &InfluencePolicy,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let mut x = self.x0.clone();
        let mut next = vec![0.0; self.n];
        observe(0, &x);
        for t in 0..self.horizon() - 1 {
            step_into(&x, &mut next, config, policy, t, self.noise_at(t), None)?;
            std::mem::swap(&mut x, &mut next);
            observe(t + 1, &x);
        }
        Ok(())
    }
}

fn check_run(config: &CrowdConfig, policy: &InfluencePolicy, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    config.validate()?;
    policy.validate()?;
    if let InfluencePolicy::Schedule { betas } = policy {
        if betas.len() + 1 < horizon {
            return Err(Error::InvalidArgument(format!(
                "schedule has {} entries, horizon {horizon} needs {}",
                betas.len(),
                horizon - 1
            )));
        }
    }
    Ok(())
}

/// Runs `horizon - 1` steps from x(0) on stream 0 of `seed`.
pub fn simulate(config: &CrowdConfig, policy: &InfluencePolicy, horizon: usize, seed: u64) -> Result<Trajectory> {
    simulate_replicate(config, policy, horizon, seed, 0)
}

/// Like [`simulate`] but on stream `replicate`; matches replicate `replicate`
/// of a Monte Carlo batch with the same seed.
pub fn simulate_replicate(
    config: &CrowdConfig,
    policy: &InfluencePolicy,
    horizon: usize,
    seed: u64,
    replicate: u64,
) -> Result<Trajectory> {
    check_run(config, policy, horizon)?;
    let scenario = Scenario::draw(config, horizon, &mut stream_rng(seed, replicate));
    let mut states = Vec::with_capacity(horizon);
    scenario.run(config, policy, |t, x| states.push(CrowdState::new(t, x.to_vec())))?;
    Ok(Trajectory::from_states(states, seed, config_digest(config, policy)))
}

pub(crate) fn validate_run(config: &CrowdConfig, policy: &InfluencePolicy, horizon: usize) -> Result<()> {
    check_run(config, policy, horizon)
}
