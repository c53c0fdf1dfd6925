use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::json;
use softcrowd::casestudy::{analyze, load_panel_csv, CaseOptions, CaseStudyReport, PANEL_STATE_BOUND};
use softcrowd::config::NoiseDist;
use softcrowd::control::{
    default_beta_grid, default_profile_grid, optimize_beta_mc, optimize_beta_robust, optimize_profile_mc,
    phase_diagram, robust_dynamic_schedule, InfluenceDesign, McSweep, RobustProblem,
};
use softcrowd::grid::parse_range;
use softcrowd::montecarlo::McSpec;
use softcrowd::resample::resample_to_grid;
use softcrowd::sysid::{estimate_beta, estimate_beta_profile, identify_open_loop, McFit, SysIdResult};
use softcrowd::trajectory::{self, Trajectory, TrajectoryMeta};
use softcrowd::{simulate as run_simulation, CrowdConfig, InfluencePolicy, InitSpec};
use softcrowd_game::session::Phase;
use softcrowd_game::{phase_events, read_log, ExportMeta};

use crate::args::{CaseArgs, McArgs, NoiseKind, PhaseArgs, RobustArgs, SimulateArgs, SysidArgs};

/// What a command produced: files plus a text and a JSON summary.
pub struct Outcome {
    pub text: String,
    pub json: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

/// Reads numbers separated by commas or whitespace.
pub fn read_numbers(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| {
            s.parse::<f64>()
                .with_context(|| format!("{}: entry {} ('{s}') is not a number", path.display(), i + 1))
        })
        .collect()
}

fn write_json(path: PathBuf, value: &impl serde::Serialize) -> anyhow::Result<PathBuf> {
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn simulate(a: &SimulateArgs, seed: u64) -> anyhow::Result<Outcome> {
    let policy = match (a.beta, a.profile_c, &a.schedule_file) {
        (Some(beta), _, _) => InfluencePolicy::Constant { beta },
        (_, Some(c), _) => InfluencePolicy::DistanceProfile { c },
        (_, _, Some(path)) => InfluencePolicy::Schedule { betas: read_numbers(path)? },
        _ => InfluencePolicy::Off,
    };
    let init = match (&a.init_file, a.mse0) {
        (Some(path), _) => InitSpec::Explicit { x: read_numbers(path)? },
        (None, Some(mse0)) => InitSpec::TargetMse { mse0, common_share: a.common_share },
        (None, None) => bail!("either --mse0 or --init-file is required"),
    };
    let config = CrowdConfig {
        n: a.n as usize,
        gains: a.gain.clone(),
        noise_sigma: a.sigma,
        state_bound: a.state_bound,
        init,
        noise_dist: match a.noise {
            NoiseKind::Gaussian => NoiseDist::Gaussian,
            NoiseKind::Uniform => NoiseDist::Uniform,
        },
    };
    let traj = run_simulation(&config, &policy, a.horizon as usize, seed)?;
    let csv_path = a.out.out.join("trajectory.csv");
    let meta_path = trajectory::save(&traj, &TrajectoryMeta::for_run(&traj, &config, &policy), &csv_path)?;
    let final_mse = *traj.mse.last().expect("horizon is at least one");
    Ok(Outcome {
        text: format!("final MSE {final_mse:.4}\ncumulative cost {:.4}\n", traj.cost),
        json: json!({ "final_mse": final_mse, "cost": traj.cost, "mse": traj.mse }),
        outputs: vec![csv_path, meta_path],
    })
}

fn design_text(d: &InfluenceDesign) -> String {
    let mut s = String::new();
    if let Some(b) = d.beta {
        let _ = writeln!(s, "beta {b:.4}");
    }
    if let Some(c) = d.c {
        let _ = writeln!(s, "c {c:.4}");
    }
    if let Some(sched) = &d.schedule {
        let list: Vec<String> = sched.iter().map(|b| format!("{b:.3}")).collect();
        let _ = writeln!(s, "schedule {}", list.join(" "));
    }
    let _ = writeln!(s, "delta MSE {:.4}", d.delta_mse);
    s
}

pub fn optimize_robust(a: &RobustArgs, dynamic: bool) -> anyhow::Result<Outcome> {
    let problem = RobustProblem::new(a.gain, a.noise_ratio, a.horizon as usize)?;
    let design = if dynamic { robust_dynamic_schedule(&problem)? } else { optimize_beta_robust(&problem)? };
    let path = write_json(a.out.out.join("design.json"), &design)?;
    Ok(Outcome { text: design_text(&design), json: serde_json::to_value(&design)?, outputs: vec![path] })
}

pub fn mc_config(a: &McArgs) -> CrowdConfig {
    CrowdConfig::uniform(a.n as usize, a.gain, a.sigma, a.mse0)
        .with_init(InitSpec::TargetMse { mse0: a.mse0, common_share: a.common_share })
        .with_state_bound(a.state_bound)
}

pub fn optimize_mc(a: &McArgs, profile: bool, seed: u64) -> anyhow::Result<Outcome> {
    let grid = match &a.grid {
        Some(spec) => parse_range(spec)?,
        None if profile => default_profile_grid(),
        None => default_beta_grid(),
    };
    let config = mc_config(a);
    let spec = McSpec::new(a.replicates, seed);
    let sweep: McSweep = if profile {
        optimize_profile_mc(&config, a.horizon as usize, spec, &grid)?
    } else {
        optimize_beta_mc(&config, a.horizon as usize, spec, &grid)?
    };
    let design_path = write_json(a.out.out.join("design.json"), &sweep.design)?;
    let sweep_path = a.out.out.join("sweep.csv");
    let mut csv = String::from(if profile { "c,mean_cost,delta_mse\n" } else { "beta,mean_cost,delta_mse\n" });
    for (g, cost) in sweep.grid.iter().zip(&sweep.costs) {
        let _ = writeln!(csv, "{g},{cost},{}", 1.0 - cost / sweep.open_loop.mean_cost);
    }
    fs::write(&sweep_path, csv).with_context(|| format!("writing {}", sweep_path.display()))?;
    let mut text = design_text(&sweep.design);
    let _ = writeln!(text, "open-loop cost {:.1}, designed cost {:.1}", sweep.open_loop.mean_cost, sweep.design.predicted_cost);
    Ok(Outcome {
        text,
        json: json!({ "design": sweep.design, "open_loop_cost": sweep.open_loop.mean_cost }),
        outputs: vec![design_path, sweep_path],
    })
}

fn game_trajectory(log: &[softcrowd_game::session::GuessRecord], meta: &ExportMeta, phase: Phase) -> anyhow::Result<Trajectory> {
    let info = meta.phase(phase).with_context(|| format!("export metadata has no {} phase", phase.as_str()))?;
    let grid = meta.grid(phase).expect("phase present");
    let r = resample_to_grid(&phase_events(log, phase), grid, info.theta_star)
        .with_context(|| format!("resampling the {} phase", phase.as_str()))?;
    Ok(r.trajectory)
}

fn fit_text(label: &str, r: &SysIdResult) -> String {
    let mut s = format!("{label}: gain {:.4}, sigma {:.4}, r2 {:.4}", r.gain_hat, r.sigma_hat, r.r2);
    if let Some(b) = r.beta_hat {
        let _ = write!(s, ", beta {b:.4}");
    }
    if let Some(c) = r.c_hat {
        let _ = write!(s, ", c {c:.4}");
    }
    s.push('\n');
    s
}

pub fn sysid(a: &SysidArgs, seed: u64) -> anyhow::Result<Outcome> {
    let (open_traj, soft_traj) = if let Some(log_path) = &a.game {
        let meta_path = a.game_meta.as_ref().expect("clap enforces --game-meta");
        let text = fs::read_to_string(log_path).with_context(|| format!("reading {}", log_path.display()))?;
        let log = read_log(&text).with_context(|| format!("parsing {}", log_path.display()))?;
        let meta: ExportMeta = serde_json::from_str(
            &fs::read_to_string(meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
        )
        .with_context(|| format!("parsing {}", meta_path.display()))?;
        (game_trajectory(&log, &meta, Phase::OpenLoop)?, Some(game_trajectory(&log, &meta, Phase::SoftFeedback)?))
    } else {
        let open = a.open.as_ref().expect("clap enforces a source");
        let load = |p: &PathBuf| trajectory::load(p).map(|(t, _)| t).with_context(|| format!("loading {}", p.display()));
        (load(open)?, a.soft.as_ref().map(load).transpose()?)
    };
    let fit = McFit::new(a.replicates, seed).with_state_bound(a.state_bound);
    let open = identify_open_loop(&open_traj, &fit).context("open-loop identification")?;
    let soft = match &soft_traj {
        Some(t) if a.profile => Some(estimate_beta_profile(t, &open).context("influence-profile fit")?),
        Some(t) => Some(estimate_beta(t, &open, &fit).context("influence fit")?),
        None => None,
    };
    let value = json!({ "open": open, "soft": soft });
    let path = write_json(a.out.out.join("sysid.json"), &value)?;
    let mut text = fit_text("open loop", &open);
    if let Some(s) = &soft {
        text += &fit_text("soft feedback", s);
    }
    Ok(Outcome { text, json: value, outputs: vec![path] })
}

pub fn phase(a: &PhaseArgs) -> anyhow::Result<Outcome> {
    let gains = parse_range(&a.gains).context("--gains")?;
    let ratios = parse_range(&a.ratios).context("--ratios")?;
    let diagram = phase_diagram(&gains, &ratios, a.horizon as usize)?;
    let path = a.out.out.join("phase.csv");
    fs::write(&path, diagram.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    Ok(Outcome {
        text: format!("{} gains x {} ratios written to {}\n", gains.len(), ratios.len(), path.display()),
        json: serde_json::to_value(&diagram)?,
        outputs: vec![path],
    })
}

pub fn case(a: &CaseArgs, seed: u64) -> anyhow::Result<Outcome> {
    let options = CaseOptions {
        window: a.window,
        fit: McFit::new(a.replicates, seed).with_state_bound(PANEL_STATE_BOUND),
        mc_design: !a.no_mc,
    };
    let mut reports = Vec::new();
    for path in &a.csv {
        let panel = load_panel_csv(path).with_context(|| format!("loading {}", path.display()))?;
        reports.push(analyze(&panel, &options).with_context(|| format!("analysing {}", path.display()))?);
    }
    let csv_path = a.out.out.join("case.csv");
    CaseStudyReport::write_csv(
        &reports,
        BufWriter::new(File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?),
    )?;
    let json_path = write_json(a.out.out.join("case.json"), &reports)?;
    let mut text = fs::read_to_string(&csv_path)?;
    for r in &reports {
        if let Some(note) = &r.note {
            let _ = writeln!(text, "{}: {note}", r.description);
        }
    }
    Ok(Outcome { text, json: serde_json::to_value(&reports)?, outputs: vec![csv_path, json_path] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_commas_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        fs::write(&path, "0.1, 0.2\n0.3\t0.4\n").unwrap();
        assert_eq!(read_numbers(&path).unwrap(), vec![0.1, 0.2, 0.3, 0.4]);
        fs::write(&path, "0.1 x").unwrap();
        let err = read_numbers(&path).unwrap_err().to_string();
        assert!(err.contains("entry 2"), "{err}");
    }
}
