//! System identification from observed trajectories.
//!
//! The open-loop model is fitted first: under `x' = g x + w` the expected
//! MSE satisfies `E[MSE(t+1)] = g^2 MSE(t) + sigma^2`, so a straight-line
//! regression of `MSE(t+1)` on `MSE(t)` gives `g^2` and `sigma^2`. The fit is
//! then polished by matching Monte Carlo MSE curves started from the observed
//! initial crowd. With `(g, sigma)` fixed, the influence weight is found by a
//! one-dimensional search, and a distance profile `beta(d) = exp(-c d)` by
//! inverting the soft-feedback update observation by observation.

use serde::{Deserialize, Serialize};

use crate::config::{CrowdConfig, InfluencePolicy, InitSpec, DEFAULT_STATE_BOUND};
use crate::error::{Error, Result};
use crate::grid::{argmin, golden_section, range_inclusive};
use crate::montecarlo::{evaluate, McSpec, DEFAULT_REPLICATES};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Regression,
    McRefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysIdResult {
    pub gain_hat: f64,
    pub sigma_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    pub r2: f64,
    pub method: FitMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Mean squared difference between simulated and observed MSE series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// False when a local search stopped on its evaluation budget.
    pub converged: bool,
}

/// Monte Carlo settings shared by the simulation-based fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McFit {
    pub spec: McSpec,
    /// State bound of the simulated model; match the data's units.
    pub state_bound: f64,
}

impl Default for McFit {
    fn default() -> Self {
        McFit { spec: McSpec::new(DEFAULT_REPLICATES, 0), state_bound: DEFAULT_STATE_BOUND }
    }
}

impl McFit {
    pub fn new(replicates: usize, seed: u64) -> Self {
        McFit { spec: McSpec::new(replicates, seed), ..Default::default() }
    }

    pub fn with_state_bound(mut self, bound: f64) -> Self {
        self.state_bound = bound;
        self
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(observed: &[f64], fitted: &[f64]) -> Result<f64> {
    if observed.len() != fitted.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            observed.len(),
            fitted.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::InsufficientData("r-squared needs at least two points".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = observed.iter().zip(fitted).map(|(o, f)| (o - f).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Regression of `MSE(t+1)` on `MSE(t)`.
pub fn estimate_open_loop(traj: &Trajectory) -> Result<SysIdResult> {
    let mse = &traj.mse;
    if mse.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 time steps, got {}", mse.len())));
    }
    let xs = &mse[..mse.len() - 1];
    let ys = &mse[1..];
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let slope = sxy / sxx;
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::NonContractiveFit(slope));
    }
    let intercept = my - slope * mx;
    let fitted: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
    let r2 = r_squared(ys, &fitted).unwrap_or(1.0);
    Ok(SysIdResult {
        gain_hat: slope.sqrt(),
        sigma_hat: intercept.max(0.0).sqrt(),
        beta_hat: None,
        c_hat: None,
        r2,
        method: FitMethod::Regression,
        replicates: None,
        seed: None,
        objective: None,
        converged: true,
    })
}

fn model(traj: &Trajectory, gain: f64, sigma: f64, bound: f64) -> Result<CrowdConfig> {
    let x0 = traj.initial_crowd();
    if x0.is_empty() {
        return Err(Error::NoUsableAgents);
    }
    let mse0 = crate::dynamics::mean_square(&x0).max(f64::MIN_POSITIVE);
    Ok(CrowdConfig::uniform(x0.len(), gain, sigma, mse0)
        .with_init(InitSpec::Explicit { x: x0 })
        .with_state_bound(bound))
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Simulated mean MSE series for the given model, started from the observed crowd.
pub fn simulated_mse(
    traj: &Trajectory,
    gain: f64,
    sigma: f64,
    policy: &InfluencePolicy,
    fit: &McFit,
) -> Result<Vec<f64>> {
    let cfg = model(traj, gain, sigma, fit.state_bound)?;
    Ok(evaluate(&cfg, traj.horizon(), fit.spec, std::slice::from_ref(policy))?.remove(0).mean_mse)
}

const NM_BUDGET: usize = 300;

struct NmOutcome {
    point: [f64; 2],
    value: f64,
    converged: bool,
}

/// Nelder-Mead on two parameters with standard coefficients.
fn nelder_mead(mut f: impl FnMut([f64; 2]) -> f64, start: [f64; 2], steps: [f64; 2], tol: [f64; 2]) -> NmOutcome {
    let mut simplex = [start, [start[0] + steps[0], start[1]], [start[0], start[1] + steps[1]]];
    let mut values = simplex.map(&mut f);
    let mut evals = 3;
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    loop {
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let small = (1..3).all(|i| (0..2).all(|k| (simplex[i][k] - simplex[0][k]).abs() <= tol[k]));
        let flat = (values[2] - values[0]).abs() <= 1e-12 * values[0].abs().max(1e-300);
        if small || flat {
            return NmOutcome { point: simplex[0], value: values[0], converged: true };
        }
        if evals >= NM_BUDGET {
            return NmOutcome { point: simplex[0], value: values[0], converged: false };
        }

        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            evals += 1;
            (simplex[2], values[2]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] { lerp(centroid, reflected, 0.5) } else { lerp(centroid, simplex[2], 0.5) };
            let fc = f(contracted);
            evals += 1;
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                    evals += 1;
                }
            }
        }
    }
}

/// Derivative-free refinement of `(g, sigma)` against Monte Carlo MSE curves.
pub fn refine_mc(traj: &Trajectory, initial: &SysIdResult, fit: &McFit) -> Result<SysIdResult> {
    let observed = traj.mse.clone();
    let x0 = traj.initial_crowd();
    let scale = crate::dynamics::mean_square(&x0).sqrt().max(1e-12);
    let mut failure = None;
    let mut objective = |p: [f64; 2]| -> f64 {
        let (g, s) = (p[0], p[1].abs());
        if !(g > 0.0 && g < 1.0) {
            return f64::INFINITY;
        }
        match simulated_mse(traj, g, s, &InfluencePolicy::Off, fit) {
            Ok(sim) => mean_sq_diff(&sim, &observed),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let g0 = initial.gain_hat.clamp(0.02, 0.98);
    let start = [g0, initial.sigma_hat];
    let start_value = objective(start);
    let g_step = if g0 > 0.5 { -0.05 } else { 0.05 };
    let s_step = (0.2 * initial.sigma_hat).max(0.05 * scale);
    let out = nelder_mead(&mut objective, start, [g_step, s_step], [1e-5, 1e-5 * scale]);
    if let Some(e) = failure {
        return Err(e);
    }
    // The search starts from the regression fit, so it can only improve on it.
    let (point, value) = if out.value <= start_value { (out.point, out.value) } else { (start, start_value) };
    let (gain, sigma) = (point[0], point[1].abs());
    let fitted = simulated_mse(traj, gain, sigma, &InfluencePolicy::Off, fit)?;
    Ok(SysIdResult {
        gain_hat: gain,
        sigma_hat: sigma,
        beta_hat: None,
        c_hat: None,
        r2: r_squared(&observed, &fitted).unwrap_or(1.0),
        method: FitMethod::McRefined,
        replicates: Some(fit.spec.replicates),
        seed: Some(fit.spec.seed),
        objective: Some(value),
        converged: out.converged,
    })
}

/// One-dimensional search for a constant influence weight with `(g, sigma)` held fixed.
pub fn estimate_beta(traj_soft: &Trajectory, open: &SysIdResult, fit: &McFit) -> Result<SysIdResult> {
    let observed = &traj_soft.mse;
    let cfg = model(traj_soft, open.gain_hat, open.sigma_hat, fit.state_bound)?;
    let horizon = traj_soft.horizon();
    let policy = |b: f64| if b == 0.0 { InfluencePolicy::Off } else { InfluencePolicy::Constant { beta: b } };

    let grid = range_inclusive(0.0, 0.99, 0.01)?;
    let policies: Vec<InfluencePolicy> = grid.iter().map(|&b| policy(b)).collect();
    let values: Vec<f64> = evaluate(&cfg, horizon, fit.spec, &policies)?
        .iter()
        .map(|e| mean_sq_diff(&e.mean_mse, observed))
        .collect();
    let i = argmin(&values).ok_or(Error::EmptyGrid)?;

    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let mut failure = None;
    let (b, fb) = golden_section(
        |b| match evaluate(&cfg, horizon, fit.spec, &[policy(b)]) {
            Ok(e) => mean_sq_diff(&e[0].mean_mse, observed),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        1e-4,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let (beta, objective) = if fb < values[i] { (b, fb) } else { (grid[i], values[i]) };
    let fitted = evaluate(&cfg, horizon, fit.spec, &[policy(beta)])?.remove(0).mean_mse;
    Ok(SysIdResult {
        gain_hat: open.gain_hat,
        sigma_hat: open.sigma_hat,
        beta_hat: Some(beta),
        c_hat: None,
        r2: r_squared(observed, &fitted).unwrap_or(1.0),
        method: FitMethod::McRefined,
        replicates: Some(fit.spec.replicates),
        seed: Some(fit.spec.seed),
        objective: Some(objective),
        converged: true,
    })
}

/// One agent transition usable for influence inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceObservation {
    pub t: usize,
    pub agent: usize,
    /// Opinion distance `|g x - u|`.
    pub distance: f64,
    /// `x(t+1) - g x(t)`.
    pub numerator: f64,
    /// `u(t) - g x(t)`.
    pub denominator: f64,
}

impl InfluenceObservation {
    /// Unclipped per-observation influence `(x(t+1) - g x) / (u - g x)`.
    pub fn raw_beta(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// Minimum opinion distance for an observation to be used.
pub const MIN_DISTANCE: f64 = 1.0;
/// Minimum number of usable observations for a profile fit.
pub const MIN_OBSERVATIONS: usize = 30;
pub const PROFILE_BINS: usize = 20;

/// Transitions with both endpoints observed and distance above `min_distance`.
pub fn influence_observations(traj: &Trajectory, gain: f64, min_distance: f64) -> Vec<InfluenceObservation> {
    let mut out = Vec::new();
    for t in 0..traj.horizon().saturating_sub(1) {
        let Some(u) = traj.feedback(t) else { continue };
        for (i, x) in traj.observed(t) {
            if !traj.is_present(t + 1, i) {
                continue;
            }
            let gx = gain * x;
            let den = u - gx;
            if den.abs() > min_distance {
                out.push(InfluenceObservation {
                    t,
                    agent: i,
                    distance: den.abs(),
                    numerator: traj.states[t + 1].x[i] - gx,
                    denominator: den,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub mean_distance: f64,
    /// Least-squares influence within the bin, clipped to [0, 1].
    pub influence: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub c_hat: f64,
    pub r2: f64,
    pub bins: Vec<ProfileBin>,
    pub observations: usize,
}

/// Pooled influence over a set of observations: `sum(num * den) / sum(den^2)`, clipped.
pub fn pooled_influence(obs: &[InfluenceObservation]) -> f64 {
    let num: f64 = obs.iter().map(|o| o.numerator * o.denominator).sum();
    let den: f64 = obs.iter().map(|o| o.denominator * o.denominator).sum();
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Bins observations by distance (equal counts) and fits `exp(-c d)` through the bin influences.
pub fn fit_influence_profile(traj_soft: &Trajectory, gain: f64) -> Result<ProfileFit> {
    let mut obs = influence_observations(traj_soft, gain, MIN_DISTANCE);
    if obs.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientExcitation(obs.len()));
    }
    obs.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let bins: Vec<ProfileBin> = (0..PROFILE_BINS)
        .map(|k| {
            let chunk = &obs[k * obs.len() / PROFILE_BINS..(k + 1) * obs.len() / PROFILE_BINS];
            ProfileBin {
                mean_distance: chunk.iter().map(|o| o.distance).sum::<f64>() / chunk.len() as f64,
                influence: pooled_influence(chunk),
                count: chunk.len(),
            }
        })
        .collect();

    // Unit intercept: log(beta) = -c d, least squares through the origin.
    let usable: Vec<&ProfileBin> = bins.iter().filter(|b| b.influence > 0.0).collect();
    let sdl: f64 = usable.iter().map(|b| b.mean_distance * b.influence.ln()).sum();
    let sdd: f64 = usable.iter().map(|b| b.mean_distance * b.mean_distance).sum();
    let c_hat = if sdd > 0.0 { -sdl / sdd } else { 0.0 };
    if !(c_hat > 0.0) {
        return Err(Error::Fit(format!("profile rate is not positive ({c_hat})")));
    }
    let observed: Vec<f64> = bins.iter().map(|b| b.influence).collect();
    let fitted: Vec<f64> = bins.iter().map(|b| (-c_hat * b.mean_distance).exp()).collect();
    let r2 = match r_squared(&observed, &fitted) {
        Ok(r) => r,
        Err(Error::ZeroVariance) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(ProfileFit { c_hat, r2, bins, observations: obs.len() })
}

/// Distance-profile estimate with `(g, sigma)` from the open-loop fit.
pub fn estimate_beta_profile(traj_soft: &Trajectory, open: &SysIdResult) -> Result<SysIdResult> {
    let fit = fit_influence_profile(traj_soft, open.gain_hat)?;
    Ok(SysIdResult {
        gain_hat: open.gain_hat,
        sigma_hat: open.sigma_hat,
        beta_hat: None,
        c_hat: Some(fit.c_hat),
        r2: fit.r2,
        method: FitMethod::Regression,
        replicates: None,
        seed: None,
        objective: None,
        converged: true,
    })
}

/// Open-loop regression followed by Monte Carlo refinement.
pub fn identify_open_loop(traj: &Trajectory, fit: &McFit) -> Result<SysIdResult> {
    let initial = estimate_open_loop(traj)?;
    refine_mc(traj, &initial, fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, CrowdState};

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(matches!(r_squared(&[2.0, 2.0], &[2.0, 2.0]), Err(Error::ZeroVariance)));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn noiseless_open_loop_is_exact() {
        let cfg = CrowdConfig::uniform(20, 0.75, 0.0, 400.0);
        let tr = simulate(&cfg, &InfluencePolicy::Off, 12, 4).unwrap();
        let r = estimate_open_loop(&tr).unwrap();
        assert!((r.gain_hat - 0.75).abs() < 1e-6);
        assert!(r.sigma_hat < 1e-5);
        assert_eq!(r.method, FitMethod::Regression);
    }

    #[test]
    fn short_or_growing_series_fail() {
        let short = Trajectory::from_states(vec![CrowdState::new(0, vec![1.0]), CrowdState::new(1, vec![0.5])], 0, String::new());
        assert!(matches!(estimate_open_loop(&short), Err(Error::InsufficientData(_))));
        let grow: Vec<CrowdState> = (0..5).map(|t| CrowdState::new(t, vec![(t + 1) as f64 * 3.0])).collect();
        let grow = Trajectory::from_states(grow, 0, String::new());
        assert!(matches!(estimate_open_loop(&grow), Err(Error::NonContractiveFit(_))));
    }

    #[test]
    fn raw_influence_is_exact_without_noise() {
        let cfg = CrowdConfig::uniform(15, 0.75, 0.0, 72000.0).with_init(InitSpec::TargetMse { mse0: 72000.0, common_share: 0.0 });
        let tr = simulate(&cfg, &InfluencePolicy::Constant { beta: 0.32 }, 10, 8).unwrap();
        let obs = influence_observations(&tr, 0.75, MIN_DISTANCE);
        assert!(obs.len() > 50);
        for o in obs {
            assert!((o.raw_beta() - 0.32).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_observations_is_insufficient_excitation() {
        let cfg = CrowdConfig::uniform(3, 0.75, 0.0, 100.0);
        let tr = simulate(&cfg, &InfluencePolicy::Constant { beta: 0.3 }, 4, 1).unwrap();
        assert!(matches!(fit_influence_profile(&tr, 0.75), Err(Error::InsufficientExcitation(_))));
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let out = nelder_mead(|p| (p[0] - 0.3).powi(2) + 2.0 * (p[1] - 5.0).powi(2), [0.8, 1.0], [0.1, 1.0], [1e-7, 1e-7]);
        assert!(out.converged);
        assert!((out.point[0] - 0.3).abs() < 1e-5);
        assert!((out.point[1] - 5.0).abs() < 1e-5);
    }

    #[test]
    fn result_json_omits_absent_fields() {
        let r = SysIdResult {
            gain_hat: 0.75,
            sigma_hat: 60.0,
            beta_hat: None,
            c_hat: None,
            r2: 0.97,
            method: FitMethod::McRefined,
            replicates: Some(5000),
            seed: Some(3),
            objective: None,
            converged: true,
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "mc_refined");
        assert!(v.get("beta_hat").is_none());
    }
}
