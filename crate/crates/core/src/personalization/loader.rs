use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{mix_with_snr_at, AudioClip};
use crate::codec::Codec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSettings {
    pub prob: f64,
    pub snr_db: f64,
}

impl Default for MixSettings {
    fn default() -> Self {
        Self {
            prob: 0.5,
            snr_db: 20.0,
        }
    }
}

/// What a mixing draw did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRecord {
    pub pool_index: usize,
    pub offset: usize,
    pub target_snr_db: f64,
    /// SNR recomputed from the two addends actually summed.
    pub measured_snr_db: f64,
}

/// With probability `settings.prob`, mix `segment` with a random pool clip
/// (at a random offset) at `settings.snr_db`; otherwise return it unchanged.
pub fn apply_mix<R: Rng + ?Sized>(
    segment: &AudioClip,
    pool: &[AudioClip],
    rng: &mut R,
    settings: MixSettings,
) -> Result<(AudioClip, Option<MixRecord>)> {
    if pool.is_empty() {
        return Err(Error::Precondition("noise pool is empty".into()));
    }
    if !rng.random_bool(settings.prob.clamp(0.0, 1.0)) {
        return Ok((segment.clone(), None));
    }
    let pool_index = rng.random_range(0..pool.len());
    let noise = &pool[pool_index];
    let offset = rng.random_range(0..noise.len().max(1));
    let mixture = mix_with_snr_at(segment, noise, settings.snr_db, offset)?;
    let record = MixRecord {
        pool_index,
        offset,
        target_snr_db: settings.snr_db,
        measured_snr_db: mixture.measured_snr_db(),
    };
    Ok((mixture.clip, Some(record)))
}

/// One training segment draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentDraw {
    pub clip: usize,
    pub segment: usize,
    pub mix: Option<MixRecord>,
}

/// Draws 1 s segments uniformly (clip, then segment) from a clip set,
/// optionally mixing them with noise, and records every draw.
#[derive(Debug, Clone)]
pub struct SegmentLoader {
    codec: Codec,
    segments: Vec<Vec<AudioClip>>,
    latents: Vec<Vec<Vec<f64>>>,
    pool: Vec<AudioClip>,
    mix: Option<MixSettings>,
    draws: Vec<SegmentDraw>,
}

impl SegmentLoader {
    pub fn new(codec: &Codec, clips: &[AudioClip], pool: &[AudioClip], mix: Option<MixSettings>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Precondition("no clips to train on".into()));
        }
        if mix.is_some() && pool.is_empty() {
            return Err(Error::Precondition(
                "mixing requested but the noise pool is empty".into(),
            ));
        }
        let seg_len = codec.config().segment_len;
        let mut segments = Vec::with_capacity(clips.len());
        let mut latents = Vec::with_capacity(clips.len());
        for clip in clips {
            let n = clip.len() / seg_len;
            if n == 0 {
                return Err(Error::domain("training clip is shorter than one segment"));
            }
            let segs: Vec<AudioClip> = (0..n).map(|i| clip.slice(i * seg_len, seg_len)).collect();
            let lats = segs
                .iter()
                .map(|s| codec.encode_segment(s.samples()).map(|l| l.values))
                .collect::<Result<Vec<_>>>()?;
            segments.push(segs);
            latents.push(lats);
        }
        Ok(Self {
            codec: codec.clone(),
            segments,
            latents,
            pool: pool.to_vec(),
            mix,
            draws: Vec::new(),
        })
    }

    /// Draw one segment latent.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        let clip = rng.random_range(0..self.segments.len());
        let segment = rng.random_range(0..self.segments[clip].len());
        let (latent, mix) = match self.mix {
            Some(settings) => {
                let (mixed, record) = apply_mix(&self.segments[clip][segment], &self.pool, rng, settings)?;
                match record {
                    Some(r) => (self.codec.encode_segment(mixed.samples())?.values, Some(r)),
                    None => (self.latents[clip][segment].clone(), None),
                }
            }
            None => (self.latents[clip][segment].clone(), None),
        };
        self.draws.push(SegmentDraw { clip, segment, mix });
        Ok(latent)
    }

    pub fn draws(&self) -> &[SegmentDraw] {
        &self.draws
    }

    pub fn into_draws(self) -> Vec<SegmentDraw> {
        self.draws
    }
}

/// Loss curve and data-loader trace of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub draws: Vec<SegmentDraw>,
}

impl TrainLog {
    pub fn touched_clips(&self) -> BTreeSet<usize> {
        self.draws.iter().map(|d| d.clip).collect()
    }

    pub fn mixed(&self) -> impl Iterator<Item = &MixRecord> {
        self.draws.iter().filter_map(|d| d.mix.as_ref())
    }

    pub fn mix_rate(&self) -> f64 {
        if self.draws.is_empty() {
            return 0.0;
        }
        self.mixed().count() as f64 / self.draws.len() as f64
    }
}
