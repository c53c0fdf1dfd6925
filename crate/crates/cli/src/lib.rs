//! Command-line front end. `main` only parses, logs and maps errors to exit
//! codes; everything else lives here so tests can drive it in-process.

pub mod args;
pub mod commands;
pub mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::hash::{BuildHasher, RandomState};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use serde::Serialize;
use softcrowd_game::{router, AppState, BotParams, GameConfig, SystemClock};

use args::{Cli, Command, OptimizeCmd, ServeArgs};
use commands::Outcome;
use manifest::{digests, strip_out, RunManifest};

/// Environment flag that makes `--seed` mandatory for randomized commands.
pub const CI_ENV: &str = "SOFTCROWD_CI";

/// Bad invocation; the binary exits with status 2 like clap does.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Result of a finished (non-serving) command.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub manifest: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
    #[serde(skip)]
    pub text: String,
}

impl Report {
    /// What the binary prints on stdout.
    pub fn render(&self, json: bool) -> String {
        if json {
            serde_json::to_string_pretty(self).expect("report serializes") + "\n"
        } else {
            let mut s = self.text.clone();
            for p in &self.outputs {
                s += &format!("wrote {}\n", p.display());
            }
            s
        }
    }
}

fn ci_mode() -> bool {
    std::env::var(CI_ENV).is_ok_and(|v| !v.is_empty() && v != "0")
}

/// Explicit seed, or fresh entropy outside CI mode.
fn resolve_seed(seed: Option<u64>) -> anyhow::Result<(u64, bool)> {
    match seed {
        Some(s) => Ok((s, false)),
        None if ci_mode() => Err(UsageError(format!("--seed is required when {CI_ENV} is set")).into()),
        None => Ok((RandomState::new().hash_one(std::time::SystemTime::now()), true)),
    }
}

fn parameters(value: &impl Serialize) -> BTreeMap<String, serde_json::Value> {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

fn prepare(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parses `argv` (without the program name) and runs the command. Serving is
/// handled by [`serve`]; here it is a usage error.
pub fn run(argv: &[String]) -> anyhow::Result<Report> {
    let cli = Cli::try_parse_from(std::iter::once("softcrowd".to_string()).chain(argv.iter().cloned()))?;
    execute(cli.command, argv)
}

pub fn execute(command: Command, argv: &[String]) -> anyhow::Result<Report> {
    let (name, params, out, seed) = match &command {
        Command::Simulate(a) => ("simulate", parameters(a), a.out.out.clone(), Some(resolve_seed(a.seed)?)),
        Command::Optimize(OptimizeCmd::Robust(a)) => ("optimize robust", parameters(a), a.out.out.clone(), None),
        Command::Optimize(OptimizeCmd::Dynamic(a)) => ("optimize dynamic", parameters(a), a.out.out.clone(), None),
        Command::Optimize(OptimizeCmd::Mc(a)) => ("optimize mc", parameters(a), a.out.out.clone(), Some(resolve_seed(a.seed)?)),
        Command::Optimize(OptimizeCmd::Profile(a)) => {
            ("optimize profile", parameters(a), a.out.out.clone(), Some(resolve_seed(a.seed)?))
        }
        Command::Sysid(a) => ("sysid", parameters(a), a.out.out.clone(), Some(resolve_seed(a.seed)?)),
        Command::Phase(a) => ("phase", parameters(a), a.out.out.clone(), None),
        Command::Case(a) => ("case", parameters(a), a.out.out.clone(), Some(resolve_seed(a.seed)?)),
        Command::Rerun(a) => return rerun(&a.manifest, &a.out),
        Command::Serve(_) => return Err(UsageError("serve runs only from the binary".into()).into()),
    };
    prepare(&out)?;
    let s = seed.map(|(s, _)| s).unwrap_or(0);
    let outcome: Outcome = match &command {
        Command::Simulate(a) => commands::simulate(a, s)?,
        Command::Optimize(OptimizeCmd::Robust(a)) => commands::optimize_robust(a, false)?,
        Command::Optimize(OptimizeCmd::Dynamic(a)) => commands::optimize_robust(a, true)?,
        Command::Optimize(OptimizeCmd::Mc(a)) => commands::optimize_mc(a, false, s)?,
        Command::Optimize(OptimizeCmd::Profile(a)) => commands::optimize_mc(a, true, s)?,
        Command::Sysid(a) => commands::sysid(a, s)?,
        Command::Phase(a) => commands::phase(a)?,
        Command::Case(a) => commands::case(a, s)?,
        Command::Rerun(_) | Command::Serve(_) => unreachable!("handled above"),
    };

    let mut replay = strip_out(argv);
    if let Some((s, true)) = seed {
        replay.extend(["--seed".to_string(), s.to_string()]);
    }
    let manifest = RunManifest {
        command: name.to_string(),
        parameters: params,
        seed: seed.map(|(s, _)| s),
        digests: digests(&outcome.outputs)?,
        outputs: outcome.outputs.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        argv: replay,
    };
    let manifest_path = manifest.write(&out)?;
    Ok(Report {
        command: name.to_string(),
        manifest: Some(manifest_path),
        outputs: outcome.outputs,
        summary: outcome.json,
        text: outcome.text,
    })
}

/// Regenerates a manifest's outputs into `out` and checks every digest.
pub fn rerun(manifest_path: &Path, out: &Path) -> anyhow::Result<Report> {
    let old = RunManifest::read(manifest_path)?;
    let mut argv = old.argv.clone();
    argv.extend(["--out".to_string(), out.display().to_string()]);
    let report = run(&argv)?;
    let new = RunManifest::read(report.manifest.as_ref().expect("commands write manifests"))?;
    let mismatched: Vec<&String> =
        old.digests.iter().filter(|(name, d)| new.digests.get(*name) != Some(*d)).map(|(name, _)| name).collect();
    if !mismatched.is_empty() {
        anyhow::bail!("outputs differ from {}: {mismatched:?}", manifest_path.display());
    }
    Ok(Report {
        command: "rerun".into(),
        text: format!("reproduced {} outputs of '{}' bit-exactly\n", old.digests.len(), old.command),
        summary: serde_json::json!({ "command": old.command, "reproduced": old.digests.len() }),
        ..report
    })
}

/// Runs the game server until the process is stopped.
pub fn serve(a: &ServeArgs, argv: &[String]) -> anyhow::Result<()> {
    let (seed, fresh) = resolve_seed(a.seed)?;
    let params = BotParams { gain: a.bot_gain, sigma: a.bot_sigma, beta: a.bot_beta, ..BotParams::default() };
    let config = GameConfig::default().with_bots(a.bots, params);
    config.validate()?;
    if let Some(dir) = &a.out {
        prepare(dir)?;
        let mut replay = argv.to_vec();
        if fresh {
            replay.extend(["--seed".to_string(), seed.to_string()]);
        }
        let m = RunManifest {
            command: "serve".into(),
            parameters: parameters(&config),
            seed: Some(seed),
            outputs: Vec::new(),
            digests: BTreeMap::new(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: replay,
        };
        m.write(dir)?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, seed, bots = a.bots, "serving the Fitness Game");
        let state = AppState::new(Arc::new(SystemClock::new()), config, seed);
        axum::serve(listener, router(state)).await.context("server failed")
    })
}
