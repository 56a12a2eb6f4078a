use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserShape};
use super::schedule::{make_schedule, NoiseSchedule};
use crate::codec::{Codec, CodecConfig, NormStats};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::text::{EmbeddingTable, TextEncoder, Vocab};

/// Architecture and schedule constants of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_steps: usize,
    pub beta_1: f64,
    pub beta_n: f64,
    pub time_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub text_hidden: usize,
    pub cond_dim: usize,
    pub embed_scale: f64,
    pub prediction: Prediction,
    pub codec: CodecConfig,
}

/// What the raw network output means. The noise estimate fed to the loss
/// and the sampler is always ε̂; with `Velocity` it is assembled as
/// `ε̂ = √(1−ᾱ_t)·z_t + √ᾱ_t·F`, which keeps early reverse steps stable
/// when ᾱ_N is tiny.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Epsilon,
    #[default]
    Velocity,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            beta_1: 1e-3,
            beta_n: 0.2,
            time_dim: 32,
            hidden: 256,
            embed_dim: 64,
            text_hidden: 64,
            cond_dim: 64,
            embed_scale: 1.0,
            prediction: Prediction::default(),
            codec: CodecConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn denoiser_shape(&self) -> DenoiserShape {
        DenoiserShape {
            latent_dim: self.codec.latent_dim(),
            time_dim: self.time_dim,
            cond_dim: self.cond_dim,
            hidden: self.hidden,
        }
    }
}

/// Everything needed to condition, denoise, and decode: the schedule, the
/// denoiser φ, the text encoder τ, the vocabulary and embedding table, and
/// the codec with its corpus standardization.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub text: TextEncoder,
    pub vocab: Vocab,
    pub table: EmbeddingTable,
    pub codec: Codec,
}

impl ModelState {
    /// Freshly initialized model over `vocab`.
    pub fn init(config: ModelConfig, vocab: Vocab, norm: NormStats, seed: u64) -> Result<Self> {
        let schedule = make_schedule(config.n_steps, config.beta_1, config.beta_n)?;
        let codec = Codec::new(config.codec.clone(), norm)?;
        let mut rng = rng_from_seed(seed);
        let table = EmbeddingTable::random(vocab.len(), config.embed_dim, config.embed_scale, &mut rng);
        let text = TextEncoder::random(config.embed_dim, config.text_hidden, config.cond_dim, &mut rng);
        let denoiser = Denoiser::random(config.denoiser_shape(), &mut rng);
        Ok(Self {
            config,
            schedule,
            denoiser,
            text,
            vocab,
            table,
            codec,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.codec.latent_dim()
    }

    pub fn n_steps(&self) -> usize {
        self.schedule.n_steps()
    }

    /// `(skip, scale)` with `ε̂ = skip·z_t + scale·F` at step `t`.
    pub fn eps_coefficients(&self, t: usize) -> (f64, f64) {
        match self.config.prediction {
            Prediction::Epsilon => (0.0, 1.0),
            Prediction::Velocity => {
                let ab = self.schedule.alpha_bar(t);
                ((1.0 - ab).sqrt(), ab.sqrt())
            }
        }
    }

    pub fn cond_dim(&self) -> usize {
        self.text.d_c()
    }

    /// Token ids for a prompt.
    pub fn tokenize(&self, prompt: &str) -> Vec<usize> {
        self.vocab.tokenize(prompt)
    }

    /// Every named parameter tensor: denoiser, text encoder, then one entry
    /// per embedding row.
    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (name, t) in self.denoiser.tensors() {
            out.push((name.to_string(), t));
        }
        for (name, t) in self.text.tensors() {
            out.push((name.to_string(), t));
        }
        let flat = self.table.vectors.as_slice().expect("standard layout");
        let d = self.table.dim();
        for r in 0..self.table.rows() {
            out.push((row_name(r), &flat[r * d..(r + 1) * d]));
        }
        out
    }

    /// Names of tensors whose bits differ between `self` and `other`.
    pub fn changed_tensors(&self, other: &ModelState) -> BTreeSet<String> {
        let a = self.named_tensors();
        let b = other.named_tensors();
        let mut changed = BTreeSet::new();
        for (name, ta) in &a {
            match b.iter().find(|(n, _)| n == name) {
                Some((_, tb)) => {
                    let same =
                        ta.len() == tb.len() && ta.iter().zip(tb.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
                    if !same {
                        changed.insert(name.clone());
                    }
                }
                None => {
                    changed.insert(name.clone());
                }
            }
        }
        for (name, _) in &b {
            if !a.iter().any(|(n, _)| n == name) {
                changed.insert(name.clone());
            }
        }
        changed
    }

    pub(crate) fn check_finite(&self, step: usize) -> Result<()> {
        for (name, t) in self.named_tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    step,
                    detail: format!("parameter {name} became non-finite"),
                });
            }
        }
        Ok(())
    }
}

pub fn row_name(r: usize) -> String {
    format!("embedding.row.{r}")
}

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trainable {
    pub denoiser: bool,
    pub text_encoder: bool,
    pub rows: BTreeSet<usize>,
}

impl Trainable {
    pub fn nothing() -> Self {
        Self::default()
    }

    /// Textual inversion: one embedding row.
    pub fn row(id: usize) -> Self {
        Self {
            rows: [id].into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn denoiser_only() -> Self {
        Self {
            denoiser: true,
            ..Self::default()
        }
    }

    pub fn denoiser_and_text() -> Self {
        Self {
            denoiser: true,
            text_encoder: true,
            ..Self::default()
        }
    }

    /// Everything, as in pretraining.
    pub fn all(model: &ModelState) -> Self {
        Self {
            denoiser: true,
            text_encoder: true,
            rows: (0..model.table.rows()).collect(),
        }
    }

    /// Tensor names this selection may modify.
    pub fn tensor_names(&self, model: &ModelState) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if self.denoiser {
            out.extend(model.denoiser.tensors().iter().map(|(n, _)| n.to_string()));
        }
        if self.text_encoder {
            out.extend(model.text.tensors().iter().map(|(n, _)| n.to_string()));
        }
        out.extend(self.rows.iter().map(|&r| row_name(r)));
        out
    }

    pub fn needs_input_grad(&self) -> bool {
        self.text_encoder || !self.rows.is_empty()
    }
}
