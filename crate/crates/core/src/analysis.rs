//! Linear-algebra view of the noiseless dynamics.
//!
//! Without noise and clamping, one soft-feedback step is the linear map
//! `x -> ((I - B) G + B S) x` with `G = diag(g)`, `B = diag(beta)` and
//! `S = (1/n) 1 1^T`. Convergence of the crowd is governed by the spectral
//! radius of that matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_weights(betas: &[f64]) -> Result<()> {
    match betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
        Some(&b) => Err(Error::InvalidInfluence(b)),
        None => Ok(()),
    }
}

/// `(I - B) G + B S` for per-agent gains and weights.
pub fn transition_matrix(gains: &[f64], betas: &[f64]) -> Result<DMatrix<f64>> {
    let n = gains.len();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if betas.len() != n {
        return Err(Error::InvalidArgument(format!("{} weights for {n} agents", betas.len())));
    }
    check_weights(betas)?;
    let share = 1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let own = if i == j { (1.0 - betas[i]) * gains[i] } else { 0.0 };
        own + betas[i] * share
    }))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Noiseless update `h(x) = (I - B) G x + B 1 mean(x)` with a uniform weight.
pub fn influence_map(x: &[f64], gains: &[f64], beta: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if gains.len() != x.len() {
        return Err(Error::InvalidArgument(format!("{} gains for {} agents", gains.len(), x.len())));
    }
    check_weights(&[beta])?;
    let u = x.iter().sum::<f64>() / x.len() as f64;
    Ok(x.iter().zip(gains).map(|(xi, g)| (1.0 - beta) * g * xi + beta * u).collect())
}

/// Contraction modulus `(1 - beta) * max|g| + beta` of [`influence_map`].
pub fn contraction_modulus(gains: &[f64], beta: f64) -> f64 {
    (1.0 - beta) * gains.iter().fold(0.0f64, |a, g| a.max(g.abs())) + beta
}

/// Upper bound on the eventual sup-norm when every noise term is bounded by `delta`.
pub fn disturbance_bound(gains: &[f64], beta: f64, delta: f64) -> Result<f64> {
    let m = contraction_modulus(gains, beta);
    if m >= 1.0 {
        return Err(Error::NotContraction(m));
    }
    Ok(delta / (1.0 - m))
}

/// Iterates the one-step expected-MSE bound from `mse0`; entry `t` bounds E[MSE(t)].
pub fn mse_bound_series(mse0: f64, gain: f64, beta: f64, sigma: f64, horizon: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(horizon);
    let mut v = mse0;
    for _ in 0..horizon {
        out.push(v);
        v = crate::control::mse_bound_step(v, gain, beta, sigma)?;
    }
    Ok(out)
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
