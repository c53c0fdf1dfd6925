//! Session state machine.
//!
//! Times passed to the session are readings of a monotone clock in seconds.
//! Every mutation first brings the session up to `now`: phase transitions
//! and bot ticks due at or before `now` are processed in time order, a
//! transition before a tick scheduled at the same instant.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use softcrowd::rng::fill_standard;
use softcrowd::{feedback_step, CrowdConfig, CrowdState, InfluencePolicy, InitSpec, NoiseDist};

use crate::config::GameConfig;
use crate::error::{GameError, Result};

pub const HISTORY_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Practice,
    OpenLoop,
    SoftFeedback,
    Finished,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Practice => "practice",
            Phase::OpenLoop => "open_loop",
            Phase::SoftFeedback => "soft_feedback",
            Phase::Finished => "finished",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        [Phase::Practice, Phase::OpenLoop, Phase::SoftFeedback, Phase::Finished].into_iter().find(|p| p.as_str() == s)
    }

    pub fn is_scored(self) -> bool {
        matches!(self, Phase::OpenLoop | Phase::SoftFeedback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub guess: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Player {
    pub last_guess: Option<f64>,
    pub guess_count: u32,
    pub score: u32,
    pub history: VecDeque<HistoryEntry>,
    pub is_bot: bool,
}

impl Player {
    fn reset(&mut self) {
        self.last_guess = None;
        self.guess_count = 0;
        self.score = 0;
        self.history.clear();
    }
}

/// One accepted guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessRecord {
    pub phase: Phase,
    pub player_id: String,
    /// Seconds since session creation.
    pub timestamp_s: f64,
    pub guess: f64,
    pub fitness: f64,
    pub score_delta: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInfo {
    pub phase: Phase,
    /// Seconds since session creation.
    pub start_s: f64,
    pub end_s: Option<f64>,
    pub theta_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessOutcome {
    pub fitness: f64,
    pub score_delta: u32,
    pub score_total: u32,
    pub guess_count: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation_message: Option<String>,
}

/// What a client may see. Never contains the hidden optimum while play is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub phase: Phase,
    /// Seconds since the scored phases started (0 before start).
    pub clock: f64,
    /// Seconds left in the current timed phase.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_remaining: Option<f64>,
    pub guess_count: u32,
    pub score: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_guess: Option<f64>,
    pub history: Vec<HistoryEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation_message: Option<String>,
    /// Revealed only once the session is finished.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<BTreeMap<Phase, f64>>,
}

pub fn recommendation_message(value: f64) -> String {
    format!("We recommend {} kcal", value.round() as i64)
}

#[derive(Debug, Clone)]
struct Bots {
    ids: Vec<String>,
    config: CrowdConfig,
    /// Current errors relative to the phase optimum.
    state: Option<CrowdState>,
    next_tick: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub config: GameConfig,
    pub seed: u64,
    created_at: f64,
    last_now: f64,
    started_at: Option<f64>,
    phase: Phase,
    theta_star: f64,
    phases: Vec<PhaseInfo>,
    players: BTreeMap<String, Player>,
    /// Join order, used for ids and stable iteration.
    roster: Vec<String>,
    recommendation: Option<f64>,
    log: Vec<GuessRecord>,
    bots: Bots,
    rng: ChaCha8Rng,
}

impl Session {
    pub fn new(id: impl Into<String>, config: GameConfig, seed: u64, now: f64) -> Result<Session> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_star = sample_theta(&config, &mut rng);
        let bp = &config.bot_params;
        let bot_config = CrowdConfig::uniform(config.n_bots.max(1), bp.gain, bp.sigma, bp.mse0)
            .with_init(InitSpec::TargetMse { mse0: bp.mse0, common_share: bp.common_share });
        let ids: Vec<String> = (0..config.n_bots).map(|i| format!("bot-{i:02}")).collect();
        let mut players = BTreeMap::new();
        for id in &ids {
            players.insert(id.clone(), Player { is_bot: true, ..Default::default() });
        }
        Ok(Session {
            id: id.into(),
            seed,
            created_at: now,
            last_now: now,
            started_at: None,
            phase: Phase::Practice,
            theta_star,
            phases: vec![PhaseInfo { phase: Phase::Practice, start_s: 0.0, end_s: None, theta_star }],
            players,
            roster: ids.clone(),
            recommendation: None,
            log: Vec::new(),
            bots: Bots { ids, config: bot_config, state: None, next_tick: 0 },
            rng,
            config,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn recommendation(&self) -> Option<f64> {
        self.recommendation
    }

    pub fn log(&self) -> &[GuessRecord] {
        &self.log
    }

    pub fn phases(&self) -> &[PhaseInfo] {
        &self.phases
    }

    pub fn players(&self) -> &BTreeMap<String, Player> {
        &self.players
    }

    pub fn player_ids(&self) -> &[String] {
        &self.roster
    }

    /// The hidden optimum of the current phase. Server-side use only.
    pub fn hidden_theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn add_player(&mut self, now: f64) -> Result<String> {
        self.advance_to(now)?;
        if self.phase == Phase::Finished {
            return Err(GameError::SessionOver);
        }
        let humans = self.players.values().filter(|p| !p.is_bot).count();
        let id = format!("p{}", humans + 1);
        self.players.insert(id.clone(), Player::default());
        self.roster.push(id.clone());
        Ok(id)
    }

    /// Ends practice and starts the first scored phase at `now`.
    pub fn start(&mut self, now: f64) -> Result<()> {
        self.advance_to(now)?;
        if self.phase != Phase::Practice {
            return Err(if self.phase == Phase::Finished { GameError::SessionOver } else { GameError::AlreadyStarted });
        }
        let now = self.last_now;
        self.started_at = Some(now);
        self.enter_phase(Phase::OpenLoop, now);
        self.advance_to(now)
    }

    fn rel(&self, t: f64) -> f64 {
        t - self.created_at
    }

    fn phase_bounds(&self) -> Option<(f64, f64)> {
        let s = self.started_at?;
        let p = self.config.phase_seconds;
        match self.phase {
            Phase::OpenLoop => Some((s, s + p)),
            Phase::SoftFeedback => Some((s + p, s + 2.0 * p)),
            _ => None,
        }
    }

    fn enter_phase(&mut self, phase: Phase, at: f64) {
        let rel = self.rel(at);
        if let Some(last) = self.phases.last_mut() {
            last.end_s = Some(rel);
        }
        self.phase = phase;
        self.recommendation = None;
        for p in self.players.values_mut() {
            p.reset();
        }
        self.bots.state = None;
        self.bots.next_tick = 0;
        if phase.is_scored() {
            self.theta_star = sample_theta(&self.config, &mut self.rng);
            self.phases.push(PhaseInfo { phase, start_s: rel, end_s: None, theta_star: self.theta_star });
        }
    }

    /// Processes every transition and bot tick due at or before `now`.
    pub fn advance_to(&mut self, now: f64) -> Result<()> {
        let now = now.max(self.last_now);
        loop {
            let bounds = self.phase_bounds();
            let transition = bounds.map(|(_, end)| end);
            let tick = match bounds {
                Some((start, end)) if self.config.n_bots > 0 => {
                    let at = start + self.bots.next_tick as f64 * self.config.bot_tick_seconds;
                    (at < end).then_some(at)
                }
                _ => None,
            };
            match (transition, tick) {
                (Some(tt), tk) if tt <= now && tk.is_none_or(|tk| tt <= tk) => {
                    let next = if self.phase == Phase::OpenLoop { Phase::SoftFeedback } else { Phase::Finished };
                    self.enter_phase(next, tt);
                }
                (_, Some(tk)) if tk <= now => self.bot_tick(tk)?,
                _ => break,
            }
        }
        self.last_now = now;
        Ok(())
    }

    fn bot_tick(&mut self, at: f64) -> Result<()> {
        let n = self.config.n_bots;
        let bp = self.config.bot_params.clone();
        let theta = self.theta_star;
        let next = match &self.bots.state {
            None => {
                let x0 = self.bots.config.init.realize(n, self.bots.config.state_bound, &mut self.rng);
                CrowdState::new(0, x0)
            }
            Some(state) => {
                let mut noise = vec![0.0; n];
                fill_standard(&mut self.rng, NoiseDist::Gaussian, &mut noise);
                noise.iter_mut().for_each(|w| *w *= bp.sigma);
                let (policy, u) = match (self.phase, self.recommendation) {
                    (Phase::SoftFeedback, Some(r)) if bp.beta > 0.0 => {
                        (InfluencePolicy::Constant { beta: bp.beta }, r - theta)
                    }
                    _ => (InfluencePolicy::Off, 0.0),
                };
                feedback_step(state, &self.bots.config, &policy, &noise, u)?
            }
        };
        // Bots act on the pre-tick snapshot; their guesses land afterwards.
        let ids = self.bots.ids.clone();
        let lo = self.config.guess_range[0];
        let hi = self.config.guess_range[1];
        for (id, x) in ids.iter().zip(&next.x) {
            self.record_guess(id, (theta + x).clamp(lo, hi), at)?;
        }
        self.bots.state = Some(next);
        self.bots.next_tick += 1;
        Ok(())
    }

    /// Fitness `f0 - ((guess - theta*) / kappa)^2 + uniform noise`; not clamped.
    pub fn sample_fitness(&mut self, guess: f64) -> f64 {
        let c = &self.config;
        let h = c.fitness_noise_halfwidth;
        let noise = if h > 0.0 { self.rng.random_range(-h..=h) } else { 0.0 };
        c.f0 - ((guess - self.theta_star) / c.kappa).powi(2) + noise
    }

    fn record_guess(&mut self, player_id: &str, guess: f64, at: f64) -> Result<GuessOutcome> {
        let fitness = self.sample_fitness(guess);
        let score_delta = u32::from(self.phase.is_scored() && fitness >= self.config.score_threshold);
        let phase = self.phase;
        let timestamp_s = self.rel(at);
        let player = self.players.get_mut(player_id).ok_or_else(|| GameError::UnknownPlayer(player_id.into()))?;
        player.last_guess = Some(guess);
        player.guess_count += 1;
        player.score += score_delta;
        player.history.push_back(HistoryEntry { guess, fitness });
        while player.history.len() > HISTORY_LEN {
            player.history.pop_front();
        }
        let (score_total, guess_count) = (player.score, player.guess_count);
        self.log.push(GuessRecord { phase, player_id: player_id.into(), timestamp_s, guess, fitness, score_delta });
        if phase == Phase::SoftFeedback {
            self.recommendation = self.mean_latest_guess();
        }
        Ok(GuessOutcome {
            fitness,
            score_delta,
            score_total,
            guess_count,
            recommendation: self.recommendation,
            recommendation_message: self.recommendation.map(recommendation_message),
        })
    }

    /// Mean of each participant's most recent guess in the current phase.
    pub fn mean_latest_guess(&self) -> Option<f64> {
        let latest: Vec<f64> = self.players.values().filter_map(|p| p.last_guess).collect();
        (!latest.is_empty()).then(|| latest.iter().sum::<f64>() / latest.len() as f64)
    }

    pub fn submit_guess(&mut self, player_id: &str, guess: f64, now: f64) -> Result<GuessOutcome> {
        self.advance_to(now)?;
        if self.phase == Phase::Finished {
            return Err(GameError::SessionOver);
        }
        match self.players.get(player_id) {
            Some(p) if !p.is_bot => {}
            _ => return Err(GameError::UnknownPlayer(player_id.into())),
        }
        let [lo, hi] = self.config.guess_range;
        if !(guess >= lo && guess <= hi) {
            return Err(GameError::OutOfRange { value: guess, min: lo, max: hi });
        }
        let now = self.last_now;
        self.record_guess(player_id, guess, now)
    }

    pub fn view(&mut self, player_id: &str, now: f64) -> Result<StateView> {
        self.advance_to(now)?;
        let player = self.players.get(player_id).ok_or_else(|| GameError::UnknownPlayer(player_id.into()))?;
        let clock = self.started_at.map_or(0.0, |s| self.last_now - s);
        let recommendation = if self.phase == Phase::SoftFeedback { self.recommendation } else { None };
        let theta_star = (self.phase == Phase::Finished)
            .then(|| self.phases.iter().map(|p| (p.phase, p.theta_star)).collect());
        Ok(StateView {
            phase: self.phase,
            clock,
            phase_remaining: self.phase_bounds().map(|(_, end)| end - self.last_now),
            guess_count: player.guess_count,
            score: player.score,
            last_guess: player.last_guess,
            history: player.history.iter().copied().collect(),
            recommendation,
            recommendation_message: recommendation.map(recommendation_message),
            theta_star,
        })
    }
}

fn sample_theta(config: &GameConfig, rng: &mut ChaCha8Rng) -> f64 {
    let [lo, hi] = config.theta_star_range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}
