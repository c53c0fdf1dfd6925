use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Soft-feedback crowd learning: simulate, design influence, identify models,
/// analyse panels and host the Fitness Game.
#[derive(Debug, Parser)]
#[command(name = "softcrowd", version)]
pub struct Cli {
    /// Print machine-readable JSON on stdout instead of a text summary.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one seeded crowd trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Design a social-influence policy.
    #[command(subcommand)]
    Optimize(OptimizeCmd),
    /// Identify gain, noise and influence from trajectory files or a game export.
    Sysid(SysidArgs),
    /// Robust optimum over a grid of gains and noise ratios.
    Phase(PhaseArgs),
    /// Panel-data case study: one results row per CSV.
    Case(CaseArgs),
    /// Run the Fitness Game server.
    Serve(ServeArgs),
    /// Rerun the command recorded in a manifest and compare output digests.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Uniform,
}

/// Output directory shared by every command that writes files.
#[derive(Debug, Args, Serialize)]
pub struct OutArgs {
    /// Directory for outputs and the run manifest (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of agents.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Learning gain in (0, 1); a comma-separated list gives one gain per agent.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gain: Vec<f64>,
    /// Standard deviation of the evaluation noise.
    #[arg(long)]
    pub sigma: f64,
    /// Constant degree of social influence in [0, 1).
    #[arg(long, group = "policy")]
    pub beta: Option<f64>,
    /// Distance-profile influence exp(-c d).
    #[arg(long, group = "policy")]
    pub profile_c: Option<f64>,
    /// File with one influence weight per step (whitespace or comma separated).
    #[arg(long, group = "policy")]
    pub schedule_file: Option<PathBuf>,
    /// Number of steps.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Target mean squared error at t = 0.
    #[arg(long, group = "initial", required_unless_present = "init_file")]
    pub mse0: Option<f64>,
    /// File with the n initial decision errors.
    #[arg(long, group = "initial")]
    pub init_file: Option<PathBuf>,
    /// Share of MSE(0) carried by an offset common to all agents.
    #[arg(long, default_value_t = softcrowd::config::DEFAULT_COMMON_SHARE)]
    pub common_share: f64,
    /// Decision errors are clamped to +/- this bound.
    #[arg(long, default_value_t = softcrowd::config::DEFAULT_STATE_BOUND)]
    pub state_bound: f64,
    /// Noise distribution.
    #[arg(long, value_enum, default_value_t)]
    pub noise: NoiseKind,
    /// RNG seed; required when SOFTCROWD_CI is set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Subcommand)]
pub enum OptimizeCmd {
    /// Constant weight minimizing the worst-case cumulative MSE bound.
    Robust(RobustArgs),
    /// Per-step schedule built greedily on the worst-case bound.
    Dynamic(RobustArgs),
    /// Constant weight minimizing the simulated expected cost.
    Mc(McArgs),
    /// Distance-profile rate c minimizing the simulated expected cost.
    Profile(McArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct RobustArgs {
    /// Learning gain in (0, 1).
    #[arg(long)]
    pub gain: f64,
    /// sigma^2 / MSE(0).
    #[arg(long)]
    pub noise_ratio: f64,
    /// Number of steps.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct McArgs {
    /// Learning gain in (0, 1).
    #[arg(long)]
    pub gain: f64,
    /// Standard deviation of the evaluation noise.
    #[arg(long)]
    pub sigma: f64,
    /// Number of agents.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Number of steps.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Target mean squared error at t = 0.
    #[arg(long)]
    pub mse0: f64,
    /// Share of MSE(0) carried by an offset common to all agents.
    #[arg(long, default_value_t = softcrowd::config::DEFAULT_COMMON_SHARE)]
    pub common_share: f64,
    /// Decision errors are clamped to +/- this bound.
    #[arg(long, default_value_t = softcrowd::config::DEFAULT_STATE_BOUND)]
    pub state_bound: f64,
    /// Monte Carlo replicates shared by every candidate.
    #[arg(long, default_value_t = softcrowd::montecarlo::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Candidate grid as start:stop:step (weights for mc, rates for profile).
    #[arg(long)]
    pub grid: Option<String>,
    /// RNG seed; required when SOFTCROWD_CI is set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["open", "game"]))]
pub struct SysidArgs {
    /// Open-loop trajectory CSV (t,agent_id,x).
    #[arg(long)]
    pub open: Option<PathBuf>,
    /// Soft-feedback trajectory CSV; enables influence estimation.
    #[arg(long, requires = "open")]
    pub soft: Option<PathBuf>,
    /// Game event log from the server's export.csv.
    #[arg(long, requires = "game_meta", conflicts_with = "open")]
    pub game: Option<PathBuf>,
    /// Session metadata from the server's export.json.
    #[arg(long)]
    pub game_meta: Option<PathBuf>,
    /// Fit a distance profile exp(-c d) instead of a constant weight.
    #[arg(long)]
    pub profile: bool,
    /// Monte Carlo replicates for the refinement fits.
    #[arg(long, default_value_t = softcrowd::montecarlo::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// State bound of the simulated model.
    #[arg(long, default_value_t = softcrowd::config::DEFAULT_STATE_BOUND)]
    pub state_bound: f64,
    /// RNG seed; required when SOFTCROWD_CI is set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    /// Gain grid start:stop:step.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub gains: String,
    /// Noise-ratio grid start:stop:step.
    #[arg(long, default_value = "0:0.25:0.01")]
    pub ratios: String,
    /// Number of steps.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CaseArgs {
    /// Panel CSV with header entity,year,value (percentages); repeatable.
    #[arg(long, required = true)]
    pub csv: Vec<PathBuf>,
    /// Number of trailing years averaged into the consensus optimum.
    #[arg(long, default_value_t = softcrowd::casestudy::DEFAULT_WINDOW)]
    pub window: usize,
    /// Monte Carlo replicates for the fits and the simulated design.
    #[arg(long, default_value_t = softcrowd::montecarlo::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Skip the simulated design; report the worst-case design only.
    #[arg(long)]
    pub no_mc: bool,
    /// RNG seed; required when SOFTCROWD_CI is set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// TCP port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Simulated players added to every session.
    #[arg(long, default_value_t = 0)]
    pub bots: usize,
    /// Bot learning gain.
    #[arg(long, default_value_t = 0.75)]
    pub bot_gain: f64,
    /// Bot evaluation-noise standard deviation (kcal).
    #[arg(long, default_value_t = 60.0)]
    pub bot_sigma: f64,
    /// Bot degree of social influence in the soft-feedback phase.
    #[arg(long, default_value_t = 0.32)]
    pub bot_beta: f64,
    /// Base seed; session k uses seed + k unless the request names one.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write a run manifest into this directory before serving.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the regenerated outputs.
    #[arg(long)]
    pub out: PathBuf,
}
