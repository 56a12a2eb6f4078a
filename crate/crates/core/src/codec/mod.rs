//! The fixed analytic encoder/decoder pair mapping audio to latents.
//!
//! Encoding: STFT → mel filterbank → dB (floored) → average-pool to a
//! 16×16 patch → per-dimension standardization. Decoding inverts the
//! standardization, expands the patch back to full mel resolution
//! piecewise-constantly, recovers a linear power spectrum by non-negative
//! least squares, and reconstructs phase with Griffin-Lim from zero phase.

mod mel;
mod stft;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{hann, Spectrum, Stft};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Front-end and latent geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub floor_db: f64,
    /// Samples per latent segment (1 s).
    pub segment_len: usize,
    pub pool_time: usize,
    pub pool_mel: usize,
    pub griffin_lim_iters: usize,
    pub mel_inverse_iters: usize,
    /// Post-Griffin-Lim passes that rescale STFT cells toward the target
    /// pooled patch.
    pub patch_refine_iters: usize,
    /// Decoded patch values are clipped to `[floor_db, ceiling_db]`.
    pub ceiling_db: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            window: 1024,
            hop: 256,
            n_mels: 64,
            floor_db: -80.0,
            segment_len: SAMPLE_RATE as usize,
            pool_time: 16,
            pool_mel: 16,
            griffin_lim_iters: 32,
            mel_inverse_iters: 60,
            patch_refine_iters: 48,
            ceiling_db: 0.0,
        }
    }
}

impl CodecConfig {
    pub fn latent_dim(&self) -> usize {
        self.pool_time * self.pool_mel
    }
}

/// A log-mel spectrogram in dB, `[n_frames × n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub n_mels: usize,
    pub hop: usize,
    pub window: usize,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Per-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fit to raw (unstandardized) patches. Standard deviations are floored
    /// at `min_std` so near-constant dimensions do not explode.
    pub fn fit(patches: &[Vec<f64>], min_std: f64) -> Result<Self> {
        let first = patches
            .first()
            .ok_or_else(|| Error::DegenerateInput("no patches to fit norm stats".into()))?;
        let dim = first.len();
        let n = patches.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in patches {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for p in patches {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| v.sqrt().max(min_std)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// A standardized, flattened log-mel patch (time-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub values: Vec<f64>,
}

impl Latent {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    stft: Stft,
    mel: MelFilterbank,
    norm: NormStats,
}

impl Codec {
    pub fn new(config: CodecConfig, norm: NormStats) -> Result<Self> {
        if norm.dim() != config.latent_dim() {
            return Err(Error::domain(format!(
                "norm stats have dim {} but latent dim is {}",
                norm.dim(),
                config.latent_dim()
            )));
        }
        let stft = Stft::new(config.window, config.hop);
        let mel = MelFilterbank::new(config.n_mels, config.window, config.sample_rate);
        if stft.n_frames(config.segment_len) < config.pool_time || config.n_mels % config.pool_mel != 0 {
            return Err(Error::domain("pooling grid does not fit the segment"));
        }
        Ok(Self {
            config,
            stft,
            mel,
            norm,
        })
    }

    /// Codec with identity standardization.
    pub fn unnormalized(config: CodecConfig) -> Result<Self> {
        let dim = config.latent_dim();
        Self::new(config, NormStats::identity(dim))
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn with_norm(&self, norm: NormStats) -> Result<Self> {
        Self::new(self.config.clone(), norm)
    }

    pub fn mel_filterbank(&self) -> &MelFilterbank {
        &self.mel
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    fn to_db(&self, p: f64) -> f64 {
        if p <= 0.0 {
            self.config.floor_db
        } else {
            (10.0 * p.log10()).max(self.config.floor_db)
        }
    }

    pub fn mel_spectrogram(&self, samples: &[f64]) -> MelSpectrogram {
        let frames = self
            .stft
            .power(samples)
            .iter()
            .map(|p| self.mel.apply(p).into_iter().map(|v| self.to_db(v)).collect())
            .collect();
        MelSpectrogram {
            frames,
            n_mels: self.config.n_mels,
            hop: self.config.hop,
            window: self.config.window,
        }
    }

    fn time_groups(&self, n_frames: usize) -> Vec<(usize, usize)> {
        let g = self.config.pool_time;
        (0..g).map(|i| (i * n_frames / g, (i + 1) * n_frames / g)).collect()
    }

    /// Average-pool a mel spectrogram into the raw (dB) patch.
    pub fn pool(&self, mel: &MelSpectrogram) -> Vec<f64> {
        let per_group = self.config.n_mels / self.config.pool_mel;
        let mut out = Vec::with_capacity(self.latent_dim());
        for (t0, t1) in self.time_groups(mel.n_frames()) {
            for mg in 0..self.config.pool_mel {
                let mut acc = 0.0;
                for frame in &mel.frames[t0..t1] {
                    acc += frame[mg * per_group..(mg + 1) * per_group].iter().sum::<f64>();
                }
                out.push(acc / ((t1 - t0) * per_group) as f64);
            }
        }
        out
    }

    /// The unstandardized dB patch of exactly one segment.
    pub fn raw_patch(&self, segment: &[f64]) -> Result<Vec<f64>> {
        if segment.len() < self.config.segment_len {
            return Err(Error::domain(format!(
                "segment has {} samples, need {}",
                segment.len(),
                self.config.segment_len
            )));
        }
        let mel = self.mel_spectrogram(&segment[..self.config.segment_len]);
        Ok(self.pool(&mel))
    }

    /// Encode one segment (the first `segment_len` samples).
    pub fn encode_segment(&self, segment: &[f64]) -> Result<Latent> {
        Ok(Latent::new(self.norm.standardize(&self.raw_patch(segment)?)))
    }

    /// Encode every whole segment of a clip.
    pub fn encode(&self, clip: &AudioClip) -> Result<Vec<Latent>> {
        self.check_rate(clip)?;
        let seg = self.config.segment_len;
        if clip.len() < seg {
            return Err(Error::domain(format!(
                "clip of {:.3} s is shorter than the {:.3} s analysis window",
                clip.duration(),
                seg as f64 / self.config.sample_rate as f64
            )));
        }
        clip.samples()
            .chunks_exact(seg)
            .map(|s| self.encode_segment(s))
            .collect()
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate() != self.config.sample_rate {
            return Err(Error::domain(format!(
                "clip is {} Hz, codec expects {} Hz",
                clip.sample_rate(),
                self.config.sample_rate
            )));
        }
        Ok(())
    }

    /// Decode one latent into a one-segment clip.
    pub fn decode(&self, latent: &Latent) -> Result<AudioClip> {
        if latent.dim() != self.latent_dim() {
            return Err(Error::domain(format!(
                "latent dim {} does not match codec dim {}",
                latent.dim(),
                self.latent_dim()
            )));
        }
        if latent.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("latent has non-finite entries"));
        }
        let (lo, hi) = (self.config.floor_db, self.config.ceiling_db.max(self.config.floor_db));
        let raw: Vec<f64> = self
            .norm
            .destandardize(&latent.values)
            .into_iter()
            .map(|v| v.clamp(lo, hi))
            .collect();
        let samples = self.reconstruct(&raw);
        AudioClip::new(samples, self.config.sample_rate)
    }

    /// Decode segments and concatenate them.
    pub fn decode_all(&self, latents: &[Latent], exec: Exec) -> Result<AudioClip> {
        let clips = par::try_map(exec, latents, |l| self.decode(l))?;
        AudioClip::concat(&clips)
    }

    fn reconstruct(&self, raw: &[f64]) -> Vec<f64> {
        let cfg = &self.config;
        let n_frames = self.stft.n_frames(cfg.segment_len);
        let per_group = cfg.n_mels / cfg.pool_mel;
        let floor = cfg.floor_db + 1e-9;

        // One magnitude spectrum per time group; frames in a group share it.
        let group_mags: Vec<Vec<f64>> = (0..cfg.pool_time)
            .map(|g| {
                let mel_power: Vec<f64> = (0..cfg.n_mels)
                    .map(|m| {
                        let db = raw[g * cfg.pool_mel + m / per_group];
                        if db <= floor {
                            0.0
                        } else {
                            10f64.powf(db / 10.0)
                        }
                    })
                    .collect();
                let lin = self.mel.invert(&mel_power, cfg.mel_inverse_iters);
                let scale = self.stft.power_norm();
                lin.into_iter().map(|p| (p * scale).sqrt()).collect()
            })
            .collect();
        let mut mags = Vec::with_capacity(n_frames);
        for (g, (t0, t1)) in self.time_groups(n_frames).into_iter().enumerate() {
            for _ in t0..t1 {
                mags.push(&group_mags[g]);
            }
        }
        let signal = griffin_lim(&self.stft, &mags, cfg.segment_len, cfg.griffin_lim_iters);
        let refined = self.refine_to_patch(signal.clone(), raw);
        if refined.iter().all(|v| v.is_finite()) {
            refined
        } else {
            signal
        }
    }

    /// Rescale each (time group, mel group) cell of the STFT so the pooled
    /// dB patch of the resynthesis approaches `target`. Cells whose target
    /// sits on the floor are only ever attenuated.
    fn refine_to_patch(&self, mut signal: Vec<f64>, target: &[f64]) -> Vec<f64> {
        let cfg = &self.config;
        let per_group = cfg.n_mels / cfg.pool_mel;
        let n_frames = self.stft.n_frames(cfg.segment_len);
        let groups = self.time_groups(n_frames);
        let n_bins = self.stft.n_bins();
        // Share of each bin owned by each mel group.
        let fb = &self.mel;
        let mut bin_share = vec![vec![0.0; n_bins]; cfg.pool_mel];
        for k in 0..n_bins {
            let w: Vec<f64> = (0..cfg.n_mels).map(|m| fb.weight(m, k)).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                for (m, wm) in w.iter().enumerate() {
                    bin_share[m / per_group][k] += wm / total;
                }
            }
        }
        let floor = cfg.floor_db + 1e-9;
        for _ in 0..cfg.patch_refine_iters {
            let mut spectra = self.stft.analyze(&signal);
            let power_frames: Vec<Vec<f64>> = spectra
                .iter()
                .map(|s| s.iter().map(|c| c.norm_sqr() / self.stft.power_norm()).collect())
                .collect();
            let mel = MelSpectrogram {
                frames: power_frames
                    .iter()
                    .map(|p| self.mel.apply(p).into_iter().map(|v| self.to_db(v)).collect())
                    .collect(),
                n_mels: cfg.n_mels,
                hop: cfg.hop,
                window: cfg.window,
            };
            let current = self.pool(&mel);
            for (g, &(t0, t1)) in groups.iter().enumerate() {
                let gains: Vec<f64> = (0..cfg.pool_mel)
                    .map(|mg| {
                        let idx = g * cfg.pool_mel + mg;
                        let mut diff = target[idx] - current[idx];
                        if target[idx] <= floor {
                            diff = diff.min(0.0);
                        }
                        10f64.powf(diff.clamp(-40.0, 40.0) / 20.0)
                    })
                    .collect();
                let bin_gain: Vec<f64> = (0..n_bins)
                    .map(|k| {
                        let share: f64 = (0..cfg.pool_mel).map(|mg| bin_share[mg][k]).sum();
                        if share > 0.0 {
                            (0..cfg.pool_mel).map(|mg| bin_share[mg][k] * gains[mg]).sum::<f64>() / share
                        } else {
                            1.0
                        }
                    })
                    .collect();
                for spec in &mut spectra[t0..t1] {
                    for (c, gk) in spec.iter_mut().zip(&bin_gain) {
                        *c *= *gk;
                    }
                }
            }
            signal = self.stft.synthesize(&spectra, cfg.segment_len);
        }
        signal
    }
}

/// Griffin-Lim phase reconstruction starting from zero phase, with the
/// fast (momentum) variant's extrapolation step.
pub fn griffin_lim(stft: &Stft, mags: &[&Vec<f64>], len: usize, iterations: usize) -> Vec<f64> {
    const MOMENTUM: f64 = 0.99;
    let mut spectra: Vec<Spectrum> = mags
        .iter()
        .map(|m| m.iter().map(|&a| Complex::new(a, 0.0)).collect())
        .collect();
    let mut signal = stft.synthesize(&spectra, len);
    let mut prev: Option<Vec<Spectrum>> = None;
    for _ in 0..iterations {
        let estimate = stft.analyze(&signal);
        let projected: Vec<Spectrum> = estimate
            .iter()
            .zip(mags)
            .map(|(est, mag)| {
                est.iter()
                    .zip(mag.iter())
                    .map(|(e, &a)| {
                        let n = e.norm();
                        if n > 0.0 {
                            e * (a / n)
                        } else {
                            Complex::new(a, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        spectra = match &prev {
            Some(p) => projected
                .iter()
                .zip(p)
                .map(|(c, q)| c.iter().zip(q).map(|(c, q)| c + (c - q) * MOMENTUM).collect())
                .collect(),
            None => projected.clone(),
        };
        prev = Some(projected);
        signal = stft.synthesize(&spectra, len);
    }
    // Final synthesis from the last consistent projection.
    match prev {
        Some(p) => stft.synthesize(&p, len),
        None => signal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec() -> Codec {
        Codec::unnormalized(CodecConfig::default()).unwrap()
    }

    #[test]
    fn norm_stats_invertible() {
        let patches = vec![vec![1.0, -3.0, 5.0], vec![2.0, 0.5, 5.0], vec![-1.0, 2.0, 5.0]];
        let ns = NormStats::fit(&patches, 1e-3).unwrap();
        for p in &patches {
            let back = ns.destandardize(&ns.standardize(p));
            for (a, b) in back.iter().zip(p) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_clip_rejected() {
        let c = codec();
        let clip = AudioClip::silence(0.5, SAMPLE_RATE);
        assert!(matches!(c.encode(&clip), Err(Error::Domain(_))));
    }

    #[test]
    fn silence_encodes_to_floor() {
        let c = codec();
        let lat = c.encode(&AudioClip::silence(1.0, SAMPLE_RATE)).unwrap();
        assert_eq!(lat.len(), 1);
        assert!(lat[0].values.iter().all(|&v| v == -80.0));
    }

    #[test]
    fn ten_second_clip_gives_ten_segments() {
        let c = codec();
        let lat = c.encode(&AudioClip::silence(10.0, SAMPLE_RATE)).unwrap();
        assert_eq!(lat.len(), 10);
    }

    #[test]
    fn decode_rejects_bad_latents() {
        let c = codec();
        assert!(c.decode(&Latent::new(vec![0.0; 10])).is_err());
        let mut v = vec![-80.0; 256];
        v[3] = f64::NAN;
        assert!(c.decode(&Latent::new(v)).is_err());
    }

    #[test]
    fn extreme_latents_decode_to_finite_audio() {
        let c = codec();
        for v in [1e6, -1e6, 50.0] {
            let clip = c.decode(&Latent::new(vec![v; 256])).unwrap();
            assert!(clip.samples().iter().all(|s| s.is_finite()));
        }
    }

    #[test]
    fn silence_latent_decodes_near_silent() {
        let c = codec();
        let clip = c.decode(&Latent::new(vec![-80.0; 256])).unwrap();
        assert_eq!(clip.len(), 16_000);
        assert!(clip.rms() < 1e-3);
    }
}
