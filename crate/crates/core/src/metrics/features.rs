//! Hand-crafted clip descriptors behind the toy embedder.

use crate::audio::AudioClip;
use crate::codec::{MelFilterbank, Stft};
use crate::error::{Error, Result};

pub const N_MELS: usize = 64;
const WINDOW: usize = 1024;
const HOP: usize = 256;
const FLOOR_DB: f64 = -80.0;

/// Width of [`clip_features`]: band means, band stds, centroid mean/std,
/// onset rate, chroma.
pub const FEATURE_DIM: usize = 2 * N_MELS + 2 + 1 + 12;

/// Fixed affine standardization of the raw descriptors so every block
/// lives on a comparable unit scale.
fn standardize(raw: &mut [f64]) {
    for v in &mut raw[..N_MELS] {
        *v = (*v + 50.0) / 15.0;
    }
    for v in &mut raw[N_MELS..2 * N_MELS] {
        *v = (*v - 6.0) / 4.0;
    }
    let c = 2 * N_MELS;
    raw[c] = (raw[c] - 0.15) / 0.1;
    raw[c + 1] = (raw[c + 1] - 0.05) / 0.05;
    raw[c + 2] = (raw[c + 2] - 2.0) / 2.0;
    for v in &mut raw[c + 3..] {
        *v = (*v - 1.0 / 12.0) * 12.0;
    }
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stft: Stft,
    mel: MelFilterbank,
    sample_rate: u32,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(16000)
    }
}

impl FeatureExtractor {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            stft: Stft::new(WINDOW, HOP),
            mel: MelFilterbank::new(N_MELS, WINDOW, sample_rate),
            sample_rate,
        }
    }

    /// Standardized descriptor vector of a clip (at least 1 s long).
    pub fn features(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        if clip.duration() < 1.0 - 1e-9 {
            return Err(Error::domain(format!(
                "clip of {:.3} s is too short to embed (need 1 s)",
                clip.duration()
            )));
        }
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::domain("clip sample rate does not match the embedder"));
        }
        let power = self.stft.power(clip.samples());
        let n_frames = power.len();
        let mel_db: Vec<Vec<f64>> = power
            .iter()
            .map(|p| {
                self.mel
                    .apply(p)
                    .into_iter()
                    .map(|v| {
                        if v > 0.0 {
                            (10.0 * v.log10()).max(FLOOR_DB)
                        } else {
                            FLOOR_DB
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(FEATURE_DIM);
        let nf = n_frames as f64;
        let means: Vec<f64> = (0..N_MELS)
            .map(|m| mel_db.iter().map(|f| f[m]).sum::<f64>() / nf)
            .collect();
        let stds: Vec<f64> = (0..N_MELS)
            .map(|m| (mel_db.iter().map(|f| (f[m] - means[m]).powi(2)).sum::<f64>() / nf).sqrt())
            .collect();
        out.extend(&means);
        out.extend(&stds);

        let nyquist = self.sample_rate as f64 / 2.0;
        let centroids: Vec<f64> = power
            .iter()
            .map(|p| {
                let total: f64 = p.iter().sum();
                if total <= 1e-12 {
                    return 0.0;
                }
                let weighted: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(k, v)| self.stft.bin_hz(k, self.sample_rate) * v)
                    .sum();
                weighted / total / nyquist
            })
            .collect();
        let c_mean = centroids.iter().sum::<f64>() / nf;
        let c_std = (centroids.iter().map(|c| (c - c_mean).powi(2)).sum::<f64>() / nf).sqrt();
        out.push(c_mean);
        out.push(c_std);
        out.push(onset_rate(&mel_db, HOP as f64 / self.sample_rate as f64));
        out.extend(chroma(&power, &self.stft, self.sample_rate));
        standardize(&mut out);
        Ok(out)
    }
}

/// Onsets per second: peaks of the rectified spectral flux above a
/// median-based adaptive threshold.
fn onset_rate(mel_db: &[Vec<f64>], frame_s: f64) -> f64 {
    if mel_db.len() < 3 {
        return 0.0;
    }
    let flux: Vec<f64> = mel_db
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).max(0.0)).sum::<f64>() / N_MELS as f64)
        .collect();
    let mut sorted = flux.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    let threshold = median + 0.3 * (max - median);
    if max - median < 1.0 {
        return 0.0;
    }
    let mut count = 0;
    for i in 1..flux.len() - 1 {
        if flux[i] > threshold && flux[i] >= flux[i - 1] && flux[i] > flux[i + 1] {
            count += 1;
        }
    }
    count as f64 / (mel_db.len() as f64 * frame_s)
}

/// Energy-weighted pitch-class histogram over 55–4000 Hz, summing to 1.
fn chroma(power: &[Vec<f64>], stft: &Stft, sr: u32) -> [f64; 12] {
    let mut hist = [0.0; 12];
    for frame in power {
        for (k, &p) in frame.iter().enumerate().skip(1) {
            let hz = stft.bin_hz(k, sr);
            if !(55.0..=4000.0).contains(&hz) {
                continue;
            }
            let pc = (12.0 * (hz / 440.0).log2() + 69.0).round() as i64;
            hist[pc.rem_euclid(12) as usize] += p;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        for h in &mut hist {
            *h /= total;
        }
    } else {
        hist = [1.0 / 12.0; 12];
    }
    hist
}
