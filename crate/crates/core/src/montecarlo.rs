//! Monte Carlo estimates of the expected MSE series and cumulative cost.
//!
//! Replicate `r` draws its scenario from stream `r` of the seed, and all
//! candidate policies in one call are run on that same scenario (common
//! random numbers). Replicates are processed in fixed-size blocks in
//! parallel and reduced in block order, so results do not depend on the
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CrowdConfig, InfluencePolicy};
use crate::dynamics::{validate_run, Scenario};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_REPLICATES: usize = 5000;
const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSpec {
    pub replicates: usize,
    pub seed: u64,
}

impl McSpec {
    pub fn new(replicates: usize, seed: u64) -> Self {
        McSpec { replicates, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean_cost: f64,
    pub cost_std_error: f64,
    pub mean_mse: Vec<f64>,
    pub mse_std_error: Vec<f64>,
    pub replicates: usize,
}

#[derive(Clone)]
struct Acc {
    cost: f64,
    cost2: f64,
    mse: Vec<f64>,
    mse2: Vec<f64>,
}

impl Acc {
    fn new(horizon: usize) -> Self {
        Acc { cost: 0.0, cost2: 0.0, mse: vec![0.0; horizon], mse2: vec![0.0; horizon] }
    }

    fn merge(&mut self, other: &Acc) {
        self.cost += other.cost;
        self.cost2 += other.cost2;
        for t in 0..self.mse.len() {
            self.mse[t] += other.mse[t];
            self.mse2[t] += other.mse2[t];
        }
    }

    fn finish(self, r: usize) -> McEstimate {
        let rf = r as f64;
        let se = |sum: f64, sum2: f64| {
            if r < 2 {
                return 0.0;
            }
            let mean = sum / rf;
            let var = ((sum2 - rf * mean * mean) / (rf - 1.0)).max(0.0);
            (var / rf).sqrt()
        };
        McEstimate {
            mean_cost: self.cost / rf,
            cost_std_error: se(self.cost, self.cost2),
            mean_mse: self.mse.iter().map(|s| s / rf).collect(),
            mse_std_error: self.mse.iter().zip(&self.mse2).map(|(s, s2)| se(*s, *s2)).collect(),
            replicates: r,
        }
    }
}

/// Estimates every policy on the same replicate scenarios.
pub fn evaluate(
    config: &CrowdConfig,
    horizon: usize,
    spec: McSpec,
    policies: &[InfluencePolicy],
) -> Result<Vec<McEstimate>> {
    if spec.replicates == 0 {
        return Err(Error::InvalidArgument("at least one replicate is required".into()));
    }
    for p in policies {
        validate_run(config, p, horizon)?;
    }
    let blocks = spec.replicates.div_ceil(BLOCK);
    let partial: Vec<Result<Vec<Acc>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut accs = vec![Acc::new(horizon); policies.len()];
            let mut series = vec![0.0; horizon];
            for r in b * BLOCK..((b + 1) * BLOCK).min(spec.replicates) {
                let scenario = Scenario::draw(config, horizon, &mut stream_rng(spec.seed, r as u64));
                for (policy, acc) in policies.iter().zip(accs.iter_mut()) {
                    scenario.run(config, policy, |t, x| {
                        series[t] = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
                    })?;
                    let cost: f64 = series.iter().sum();
                    acc.cost += cost;
                    acc.cost2 += cost * cost;
                    for t in 0..horizon {
                        acc.mse[t] += series[t];
                        acc.mse2[t] += series[t] * series[t];
                    }
                }
            }
            Ok(accs)
        })
        .collect();
    let mut total = vec![Acc::new(horizon); policies.len()];
    for block in partial {
        for (tot, acc) in total.iter_mut().zip(block?) {
            tot.merge(&acc);
        }
    }
    Ok(total.into_iter().map(|a| a.finish(spec.replicates)).collect())
}

pub fn evaluate_one(config: &CrowdConfig, policy: &InfluencePolicy, horizon: usize, spec: McSpec) -> Result<McEstimate> {
    Ok(evaluate(config, horizon, spec, std::slice::from_ref(policy))?.remove(0))
}
