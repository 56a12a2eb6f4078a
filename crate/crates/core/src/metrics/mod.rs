//! Embedding-space similarity, Fréchet distance, and tempo, loudness and
//! key metrics with their match tolerances.

mod contrastive;
mod embed;
mod embfile;
mod fad;
mod features;
mod key;
mod loudness;
mod similarity;
mod tempo;

use serde::{Deserialize, Serialize};

pub use contrastive::{ContrastiveConfig, ContrastiveHead, ContrastiveLog};
pub use embed::{unit_normalize, Embedder, EmbedderKind, ToyEmbedder, TOY_DIM};
pub use embfile::{
    decode_binary, decode_text, encode_binary, encode_text, read_embeddings, write_embeddings, EmbeddingEncoding,
    BINARY_MAGIC, EMBEDDING_FORMAT_VERSION, TEXT_MAGIC,
};
pub use fad::{fad, gaussian_stats, sqrtm_psd, trace_sqrt_product, FadResult, COV_RIDGE};
pub use features::{FeatureExtractor, FEATURE_DIM};
pub use key::{
    detect_key, hpcp, key_correlations, key_from_profile, key_scale_match, modal_key, pearson, KeyEstimate, KeyProfile,
    MIN_CORRELATION_SPREAD, MIN_PROFILE_CONTRAST,
};
pub use loudness::{integrated_loudness, k_weighting, loudness_match, LOUDNESS_TOLERANCE};
pub use similarity::{clap_a, clap_t, cosine, mean_pairwise_within, EmbeddingSet};
pub use tempo::{
    bpm_match, estimate_bpm, octave_match, onset_envelope, TempoEstimate, BPM_TOLERANCE, MAX_TEMPO_BPM, MIN_TEMPO_BPM,
};

use crate::audio::AudioClip;
use crate::error::Result;

/// Rhythm, dynamics and harmony descriptors of one clip. Fields are `None`
/// when the detector declines (no onsets, silence, no tonal center).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicFeatures {
    pub tempo: TempoEstimate,
    pub loudness: Option<f64>,
    pub key: Option<KeyEstimate>,
}

impl MusicFeatures {
    pub fn bpm(&self) -> Option<f64> {
        self.tempo.bpm
    }
}

/// All three descriptors; the clip must be at least 4 s long.
pub fn music_features(clip: &AudioClip, profile: KeyProfile) -> Result<MusicFeatures> {
    Ok(MusicFeatures {
        tempo: estimate_bpm(clip)?,
        loudness: integrated_loudness(clip)?,
        key: detect_key(clip, profile)?,
    })
}
