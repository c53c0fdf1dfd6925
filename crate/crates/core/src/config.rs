//! Crowd and influence configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest admissible degree of social influence. A weight of exactly one
/// would freeze the crowd at its mean and break contraction.
pub const MAX_INFLUENCE: f64 = 1.0 - 1e-6;

/// Default half-width of the state set, in decision units (kcal).
pub const DEFAULT_STATE_BOUND: f64 = 500.0;

/// Default share of the target MSE(0) carried by the error common to all agents.
pub const DEFAULT_COMMON_SHARE: f64 = 0.9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDist {
    /// Normal(0, sigma^2).
    #[default]
    Gaussian,
    /// Uniform on [-sigma*sqrt(3), sigma*sqrt(3)], bounded with variance sigma^2.
    Uniform,
}

/// How the initial decision errors are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Use this error vector verbatim (length n).
    Explicit { x: Vec<f64> },
    /// Draw errors whose mean square equals `mse0`.
    ///
    /// A share `common_share` of `mse0` is an offset shared by every agent
    /// (random sign); the rest is a centred uniform spread. With
    /// `common_share = 0` the errors are plain zero-mean uniform draws on
    /// `[-a, a]`, `a = sqrt(3 * mse0)`, rescaled to hit `mse0`.
    TargetMse { mse0: f64, common_share: f64 },
}

impl InitSpec {
    pub fn target(mse0: f64) -> Self {
        InitSpec::TargetMse { mse0, common_share: DEFAULT_COMMON_SHARE }
    }

    fn validate(&self, n: usize, bound: f64) -> Result<()> {
        match self {
            InitSpec::Explicit { x } => {
                if x.len() != n {
                    return Err(Error::InvalidConfig(format!(
                        "initial state has {} entries, expected {n}",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("non-finite initial state".into()));
                }
            }
            InitSpec::TargetMse { mse0, common_share } => {
                if !(mse0.is_finite() && *mse0 > 0.0) {
                    return Err(Error::InvalidConfig(format!("MSE(0) must be positive, got {mse0}")));
                }
                if !(0.0..=1.0).contains(common_share) {
                    return Err(Error::InvalidConfig(format!(
                        "common share must lie in [0, 1], got {common_share}"
                    )));
                }
                if mse0.sqrt() > bound {
                    return Err(Error::InvalidConfig(format!(
                        "MSE(0) = {mse0} is not attainable inside the state bound {bound}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Realizes the initial error vector. Explicit states consume no draws.
    pub fn realize(&self, n: usize, bound: f64, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            InitSpec::Explicit { x } => x.iter().map(|v| v.clamp(-bound, bound)).collect(),
            InitSpec::TargetMse { mse0, common_share } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut spread: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let centre = spread.iter().sum::<f64>() / n as f64;
                spread.iter_mut().for_each(|v| *v -= centre);
                let spread_ms = spread.iter().map(|v| v * v).sum::<f64>() / n as f64;

                // A single agent (or a degenerate draw) has no spread to carry.
                let share = if spread_ms > 0.0 { *common_share } else { 1.0 };
                let offset = sign * (share * mse0).sqrt();
                let scale = if spread_ms > 0.0 { ((1.0 - share) * mse0 / spread_ms).sqrt() } else { 0.0 };
                let mut x: Vec<f64> = spread.iter().map(|v| offset + scale * v).collect();

                // Clamping can only shrink the mean square; a few rescale passes
                // restore it whenever the bound leaves room.
                for _ in 0..8 {
                    x.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
                    let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
                    if ms <= 0.0 || ((ms - mse0) / mse0).abs() <= 1e-12 {
                        break;
                    }
                    let k = (mse0 / ms).sqrt();
                    x.iter_mut().for_each(|v| *v *= k);
                }
                x.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
                x
            }
        }
    }
}

/// Population parameters for the crowd dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdConfig {
    pub n: usize,
    /// Learning gains; a single entry applies to every agent.
    pub gains: Vec<f64>,
    pub noise_sigma: f64,
    pub state_bound: f64,
    pub init: InitSpec,
    #[serde(default)]
    pub noise_dist: NoiseDist,
}

impl CrowdConfig {
    /// Uniform-gain crowd with a target MSE(0) and the default bound and noise.
    pub fn uniform(n: usize, gain: f64, noise_sigma: f64, mse0: f64) -> Self {
        CrowdConfig {
            n,
            gains: vec![gain],
            noise_sigma,
            state_bound: DEFAULT_STATE_BOUND,
            init: InitSpec::target(mse0),
            noise_dist: NoiseDist::Gaussian,
        }
    }

    pub fn with_init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }

    pub fn with_state_bound(mut self, bound: f64) -> Self {
        self.state_bound = bound;
        self
    }

    pub fn with_noise_dist(mut self, dist: NoiseDist) -> Self {
        self.noise_dist = dist;
        self
    }

    #[inline]
    pub fn gain(&self, i: usize) -> f64 {
        if self.gains.len() == 1 {
            self.gains[0]
        } else {
            self.gains[i]
        }
    }

    pub fn max_abs_gain(&self) -> f64 {
        self.gains.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyPopulation);
        }
        if self.gains.len() != 1 && self.gains.len() != self.n {
            return Err(Error::InvalidConfig(format!(
                "expected 1 or {} gains, got {}",
                self.n,
                self.gains.len()
            )));
        }
        if let Some(g) = self.gains.iter().find(|g| !(g.abs() < 1.0)) {
            return Err(Error::InvalidConfig(format!("learning gain {g} is not a contraction")));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.state_bound.is_finite() && self.state_bound > 0.0) {
            return Err(Error::InvalidConfig(format!("state bound must be > 0, got {}", self.state_bound)));
        }
        self.init.validate(self.n, self.state_bound)
    }
}

/// How each agent weights the population feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfluencePolicy {
    Off,
    Constant { beta: f64 },
    /// beta(d) = exp(-c * d) with d = |g_i * x_i - u|.
    DistanceProfile { c: f64 },
    /// beta(t) for step t.
    Schedule { betas: Vec<f64> },
}

impl InfluencePolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            InfluencePolicy::Off => Ok(()),
            InfluencePolicy::Constant { beta } => check_weight(*beta).map(|_| ()),
            InfluencePolicy::DistanceProfile { c } => {
                if c.is_finite() && *c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("profile rate c must be positive, got {c}")))
                }
            }
            InfluencePolicy::Schedule { betas } => betas.iter().try_for_each(|b| check_weight(*b).map(|_| ())),
        }
    }

    /// True when the weight depends on the opinion distance.
    pub fn uses_distance(&self) -> bool {
        matches!(self, InfluencePolicy::DistanceProfile { .. })
    }

    /// Influence weight at step `t` for an agent at opinion distance `d`.
    pub fn weight(&self, t: usize, d: f64) -> Result<f64> {
        match self {
            InfluencePolicy::Off => Ok(0.0),
            InfluencePolicy::Constant { beta } => check_weight(*beta),
            InfluencePolicy::DistanceProfile { c } => Ok(profile_weight(*c, d)),
            InfluencePolicy::Schedule { betas } => match betas.get(t) {
                Some(b) => check_weight(*b),
                None => Err(Error::InvalidArgument(format!(
                    "schedule has {} entries, step {t} requested",
                    betas.len()
                ))),
            },
        }
    }

    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

#[inline]
pub fn profile_weight(c: f64, d: f64) -> f64 {
    (-c * d).exp().min(MAX_INFLUENCE)
}

fn check_weight(beta: f64) -> Result<f64> {
    if (0.0..1.0).contains(&beta) {
        Ok(beta)
    } else {
        Err(Error::InvalidInfluence(beta))
    }
}

pub(crate) fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Digest of a crowd configuration together with its influence policy.
pub fn config_digest(config: &CrowdConfig, policy: &InfluencePolicy) -> String {
    digest_json(&(config, policy))
}
