//! Soft-feedback collective learning.
//!
//! A crowd of `n` agents each learns an unknown optimum by contracting its
//! decision error `x_i` with gain `g_i` under noisy function evaluations. With
//! soft feedback every agent may blend its own update with the population
//! mean error `u`, weighting it by a degree of social influence `beta_i`:
//!
//! ```text
//! x_i(t+1) = (1 - beta_i) * (g_i * x_i(t) + w_i(t)) + beta_i * u(t)
//! ```
//!
//! The crate provides the seeded dynamics ([`dynamics`]), Monte Carlo
//! machinery with common random numbers ([`montecarlo`]), robust and
//! simulation-based influence design ([`control`]), system identification
//! from trajectories ([`sysid`]) and the panel-data pipeline ([`casestudy`]).

pub mod analysis;
pub mod casestudy;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod montecarlo;
pub mod resample;
pub mod rng;
pub mod sysid;
pub mod trajectory;

pub use config::{CrowdConfig, InfluencePolicy, InitSpec, NoiseDist, MAX_INFLUENCE};
pub use dynamics::{feedback_step, open_loop_step, population_feedback, simulate, soft_feedback_step, CrowdState};
pub use error::{Error, Result};
pub use trajectory::Trajectory;
