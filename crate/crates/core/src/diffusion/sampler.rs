use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::denoiser::assemble_input;
use super::model::ModelState;
use super::schedule::{forward_noise, time_embedding, NoiseSchedule};
use crate::audio::AudioClip;
use crate::codec::Latent;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::{child_seed_index, gaussian_vec, rng_from_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    /// Inject σ_n = √β_n noise at each step; `false` gives the deterministic
    /// variant.
    pub stochastic: bool,
    /// Classifier-free guidance scale against the null conditioning. `None`
    /// disables guidance.
    pub guidance: Option<f64>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            stochastic: true,
            guidance: None,
        }
    }
}

/// One ancestral step from `z_n` to `z_{n-1}` given the noise estimate.
/// `xi` is ignored at `n = 1` and when `None`.
pub fn ddpm_step(sched: &NoiseSchedule, n: usize, z: &[f64], eps_hat: &[f64], xi: Option<&[f64]>) -> Vec<f64> {
    let beta = sched.beta(n);
    let coef = beta / (1.0 - sched.alpha_bar(n)).sqrt();
    let scale = 1.0 / (1.0 - beta).sqrt();
    let sigma = beta.sqrt();
    let mut out: Vec<f64> = z.iter().zip(eps_hat).map(|(zi, ei)| (zi - coef * ei) * scale).collect();
    if n > 1 {
        if let Some(xi) = xi {
            for (o, x) in out.iter_mut().zip(xi) {
                *o += sigma * x;
            }
        }
    }
    out
}

/// Noise estimates for a batch of latents sharing one step and one
/// conditioning vector.
fn predict_batch(model: &ModelState, zs: &[Vec<f64>], n: usize, cond: &Array1<f64>) -> Result<Vec<Vec<f64>>> {
    let temb = time_embedding(n, model.n_steps(), model.config.time_dim);
    let refs: Vec<&[f64]> = zs.iter().map(|z| z.as_slice()).collect();
    let tembs = vec![temb; zs.len()];
    let conds = vec![cond; zs.len()];
    let out = model.denoiser.predict(assemble_input(&refs, &tembs, &conds))?;
    let (skip, scale) = model.eps_coefficients(n);
    Ok(out
        .outer_iter()
        .zip(zs)
        .map(|(r, z)| r.iter().zip(z).map(|(f, zi)| skip * zi + scale * f).collect())
        .collect())
}

/// Run the reverse chain from step `t_start` down to 0 for a batch of
/// latents, each with its own noise stream.
pub fn reverse_chain(
    model: &ModelState,
    mut zs: Vec<Vec<f64>>,
    t_start: usize,
    cond: &Array1<f64>,
    rngs: &mut [StreamRng],
    opts: SampleOptions,
) -> Result<Vec<Vec<f64>>> {
    model.schedule.check_step(t_start)?;
    let null = Array1::zeros(cond.len());
    for n in (1..=t_start).rev() {
        let mut eps = predict_batch(model, &zs, n, cond)?;
        if let Some(w) = opts.guidance {
            let uncond = predict_batch(model, &zs, n, &null)?;
            for (e, u) in eps.iter_mut().zip(&uncond) {
                for (ei, ui) in e.iter_mut().zip(u) {
                    *ei = ui + w * (*ei - ui);
                }
            }
        }
        zs = zs
            .iter()
            .zip(&eps)
            .zip(rngs.iter_mut())
            .map(|((z, e), rng)| {
                let xi = (opts.stochastic && n > 1).then(|| gaussian_vec(rng, z.len()));
                ddpm_step(&model.schedule, n, z, e, xi.as_deref())
            })
            .collect();
    }
    for z in &zs {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: 0,
                detail: "sampled latent is non-finite".into(),
            });
        }
    }
    Ok(zs)
}

fn segment_rngs(seed: u64, n: usize) -> Vec<StreamRng> {
    (0..n)
        .map(|i| rng_from_seed(child_seed_index(seed, "segment", i)))
        .collect()
}

fn prompt_condition(model: &ModelState, prompt: &str) -> Result<Array1<f64>> {
    let ids = model.tokenize(prompt);
    model.text.forward(&model.table, &ids).map(|(c, _)| c)
}

/// Generate `n_segments` latents from pure noise.
pub fn sample_latents(
    model: &ModelState,
    prompt: &str,
    seed: u64,
    n_segments: usize,
    opts: SampleOptions,
) -> Result<Vec<Latent>> {
    let cond = prompt_condition(model, prompt)?;
    let mut rngs = segment_rngs(seed, n_segments);
    let dim = model.latent_dim();
    let zs: Vec<Vec<f64>> = rngs.iter_mut().map(|r| gaussian_vec(r, dim)).collect();
    let out = reverse_chain(model, zs, model.n_steps(), &cond, &mut rngs, opts)?;
    Ok(out.into_iter().map(Latent::new).collect())
}

/// Generate audio: sample each segment, decode, concatenate.
pub fn sample(
    model: &ModelState,
    prompt: &str,
    seed: u64,
    n_segments: usize,
    opts: SampleOptions,
    exec: Exec,
) -> Result<AudioClip> {
    let latents = sample_latents(model, prompt, seed, n_segments, opts)?;
    model.codec.decode_all(&latents, exec)
}

/// Shallow-reverse style transfer. The input is encoded, noised to step
/// `t = round(s·N)` and denoised back under the prompt. `s = 0` is the codec
/// roundtrip; `s = 1` replaces the latent with a pure Gaussian draw.
pub fn style_transfer(
    model: &ModelState,
    input: &AudioClip,
    strength: f64,
    prompt: &str,
    seed: u64,
    opts: SampleOptions,
    exec: Exec,
) -> Result<AudioClip> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::domain(format!("transfer strength {strength} outside [0, 1]")));
    }
    let n = model.n_steps();
    let t = (strength * n as f64).round() as usize;
    let latents = model.codec.encode(input)?;
    if t == 0 {
        return model.codec.decode_all(&latents, exec);
    }
    let cond = prompt_condition(model, prompt)?;
    let mut rngs = segment_rngs(seed, latents.len());
    let dim = model.latent_dim();
    let mut zs = Vec::with_capacity(latents.len());
    for (z0, rng) in latents.iter().zip(rngs.iter_mut()) {
        let eps = gaussian_vec(rng, dim);
        zs.push(if t == n {
            eps
        } else {
            forward_noise(&z0.values, t, &eps, &model.schedule)?
        });
    }
    let out = reverse_chain(model, zs, t, &cond, &mut rngs, opts)?;
    let latents: Vec<Latent> = out.into_iter().map(Latent::new).collect();
    model.codec.decode_all(&latents, exec)
}
