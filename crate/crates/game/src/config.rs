use serde::{Deserialize, Serialize};
use softcrowd::config::DEFAULT_COMMON_SHARE;

use crate::error::{GameError, Result};

/// Parameters of the simulated players. Errors are in kcal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BotParams {
    pub gain: f64,
    pub sigma: f64,
    pub beta: f64,
    /// Mean square of the initial guess errors.
    pub mse0: f64,
    /// Share of `mse0` carried by an error common to all bots.
    pub common_share: f64,
}

impl Default for BotParams {
    fn default() -> Self {
        BotParams { gain: 0.75, sigma: 60.0, beta: 0.32, mse0: 72000.0, common_share: DEFAULT_COMMON_SHARE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub theta_star_range: [f64; 2],
    /// Maximum expected fitness.
    pub f0: f64,
    /// Fitness scale in kcal.
    pub kappa: f64,
    pub fitness_noise_halfwidth: f64,
    pub score_threshold: f64,
    pub phase_seconds: f64,
    pub guess_range: [f64; 2],
    pub n_bots: usize,
    pub bot_params: BotParams,
    pub bot_tick_seconds: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            theta_star_range: [2000.0, 2500.0],
            f0: 0.98,
            kappa: 500.0,
            fitness_noise_halfwidth: 0.02,
            score_threshold: 0.99,
            phase_seconds: 240.0,
            guess_range: [1500.0, 3000.0],
            n_bots: 0,
            bot_params: BotParams::default(),
            bot_tick_seconds: 8.0,
        }
    }
}

impl GameConfig {
    pub fn with_bots(mut self, n: usize, params: BotParams) -> Self {
        self.n_bots = n;
        self.bot_params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GameError::BadRequest(m.to_string()));
        if !(self.theta_star_range[0] <= self.theta_star_range[1]) {
            return bad("theta_star_range must be increasing");
        }
        if !(self.guess_range[0] < self.guess_range[1]) {
            return bad("guess_range must be increasing");
        }
        if !(self.kappa > 0.0 && self.phase_seconds > 0.0 && self.bot_tick_seconds > 0.0) {
            return bad("kappa, phase_seconds and bot_tick_seconds must be positive");
        }
        if self.fitness_noise_halfwidth < 0.0 {
            return bad("fitness noise half-width must be nonnegative");
        }
        let b = &self.bot_params;
        if self.n_bots > 0 {
            if !(b.gain > -1.0 && b.gain < 1.0) || b.sigma < 0.0 || !(0.0..1.0).contains(&b.beta) || !(b.mse0 > 0.0) {
                return bad("bot parameters out of range");
            }
            if !(0.0..=1.0).contains(&b.common_share) {
                return bad("bot common_share must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Whether a guess of this size can earn a point at all.
    pub fn scorable(&self, error: f64) -> bool {
        self.f0 - (error / self.kappa).powi(2) + self.fitness_noise_halfwidth >= self.score_threshold
    }
}
