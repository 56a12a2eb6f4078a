use serde::{Deserialize, Serialize};

use super::contrastive::ContrastiveHead;
use super::features::{FeatureExtractor, FEATURE_DIM};
use super::similarity::EmbeddingSet;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{gaussian_vec, rng_from_seed};

pub const TOY_DIM: usize = 128;
const TOY_PROJECTION_SEED: u64 = 0x7475_6e65_6c61_6201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    ToyAudioFeatures,
    ContrastiveTrained,
    PrecomputedFile,
}

impl EmbedderKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbedderKind::ToyAudioFeatures => "toy_audio_features",
            EmbedderKind::ContrastiveTrained => "contrastive_trained",
            EmbedderKind::PrecomputedFile => "precomputed_file",
        }
    }
}

pub fn unit_normalize(v: &mut [f64]) -> Result<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain("cannot normalize a zero or non-finite vector"));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}

/// Clip descriptors under a fixed Gaussian projection, unit normalized.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    features: FeatureExtractor,
    projection: Vec<f64>,
    dim: usize,
}

impl Default for ToyEmbedder {
    fn default() -> Self {
        Self::new(TOY_DIM, 16000)
    }
}

impl ToyEmbedder {
    pub fn new(dim: usize, sample_rate: u32) -> Self {
        let mut rng = rng_from_seed(TOY_PROJECTION_SEED);
        let scale = 1.0 / (dim as f64).sqrt();
        let projection = gaussian_vec(&mut rng, dim * FEATURE_DIM)
            .into_iter()
            .map(|x| x * scale)
            .collect();
        Self {
            features: FeatureExtractor::new(sample_rate),
            projection,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        let f = self.features.features(clip)?;
        let mut out: Vec<f64> = self
            .projection
            .chunks(FEATURE_DIM)
            .map(|row| row.iter().zip(&f).map(|(w, x)| w * x).sum())
            .collect();
        unit_normalize(&mut out)?;
        Ok(out)
    }
}

/// Pluggable audio (and, where supported, text) embedder.
#[derive(Debug, Clone)]
pub enum Embedder {
    Toy(ToyEmbedder),
    Contrastive(Box<ContrastiveHead>),
    /// Vectors computed outside this crate and loaded from files; it cannot
    /// embed audio itself.
    Precomputed {
        dim: usize,
    },
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::Toy(ToyEmbedder::default())
    }
}

impl Embedder {
    pub fn kind(&self) -> EmbedderKind {
        match self {
            Embedder::Toy(_) => EmbedderKind::ToyAudioFeatures,
            Embedder::Contrastive(_) => EmbedderKind::ContrastiveTrained,
            Embedder::Precomputed { .. } => EmbedderKind::PrecomputedFile,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Toy(t) => t.dim(),
            Embedder::Contrastive(c) => c.dim(),
            Embedder::Precomputed { dim } => *dim,
        }
    }

    pub fn embed_audio(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        match self {
            Embedder::Toy(t) => t.embed(clip),
            Embedder::Contrastive(c) => c.embed_audio(clip),
            Embedder::Precomputed { .. } => Err(Error::Unsupported(
                "a precomputed embedder only scores vectors loaded from files".into(),
            )),
        }
    }

    pub fn embed_text(&self, prompt: &str) -> Result<Vec<f64>> {
        match self {
            Embedder::Contrastive(c) => c.embed_text(prompt),
            other => Err(Error::Unsupported(format!(
                "the {} embedder has no text tower",
                other.kind().name()
            ))),
        }
    }

    pub fn embed_set(&self, clips: &[AudioClip], source: &str, exec: Exec) -> Result<EmbeddingSet> {
        let vectors = par::try_map(exec, clips, |c| self.embed_audio(c))?;
        EmbeddingSet::new(vectors, source)
    }
}
