use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear β schedule with cumulative products ᾱ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// `betas[t - 1]` is β_t for t in 1..=N.
    betas: Vec<f64>,
    /// `alpha_bar[t]` for t in 0..=N, with ᾱ_0 = 1.
    alpha_bar: Vec<f64>,
}

/// Linearly interpolate β from `beta_1` to `beta_n` over `n` steps.
pub fn make_schedule(n: usize, beta_1: f64, beta_n: f64) -> Result<NoiseSchedule> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 steps, got {n}")));
    }
    if !(beta_1 > 0.0 && beta_1 <= beta_n && beta_n < 1.0) {
        return Err(Error::domain(format!(
            "need 0 < beta_1 <= beta_N < 1, got ({beta_1}, {beta_n})"
        )));
    }
    let betas: Vec<f64> = (0..n)
        .map(|i| beta_1 + (beta_n - beta_1) * i as f64 / (n - 1) as f64)
        .collect();
    let mut alpha_bar = Vec::with_capacity(n + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for b in &betas {
        acc *= 1.0 - b;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { betas, alpha_bar })
}

impl NoiseSchedule {
    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta_bounds(&self) -> (f64, f64) {
        (self.betas[0], *self.betas.last().unwrap())
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.n_steps() {
            return Err(Error::domain(format!("time step {t} outside 0..={}", self.n_steps())));
        }
        Ok(())
    }
}

/// `z_t = sqrt(ᾱ_t)·z0 + sqrt(1 − ᾱ_t)·ε`. Step 0 returns `z0` (ᾱ_0 = 1).
pub fn forward_noise(z0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if z0.len() != eps.len() {
        return Err(Error::domain("noise and latent dimensions differ"));
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect())
}

/// Sinusoidal embedding of step `t`: `[sin(ω_k t), cos(ω_k t)]` with
/// angular frequencies geometric from 1 down to 1/N.
pub fn time_embedding(t: usize, n_steps: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    let omegas: Vec<f64> = (0..half)
        .map(|k| {
            let frac = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            (n_steps as f64).powf(-frac)
        })
        .collect();
    out.extend(omegas.iter().map(|w| (w * t as f64).sin()));
    out.extend(omegas.iter().map(|w| (w * t as f64).cos()));
    out
}
