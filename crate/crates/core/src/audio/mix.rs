use super::clip::{rms, AudioClip};
use crate::error::{Error, Result};

/// Output of [`mix_with_snr`], keeping the two addends for auditing.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub clip: AudioClip,
    /// Gain applied to the (cropped or looped) noise before summing.
    pub noise_gain: f64,
    /// Overall scale applied afterwards to avoid clipping (1.0 if none).
    pub output_scale: f64,
    /// The signal and scaled-noise components exactly as they were summed.
    pub signal_part: Vec<f64>,
    pub noise_part: Vec<f64>,
}

impl Mixture {
    /// 10·log10 of the power ratio of the two addends.
    pub fn measured_snr_db(&self) -> f64 {
        snr_db(&self.signal_part, &self.noise_part)
    }
}

pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ps = rms(signal).powi(2);
    let pn = rms(noise).powi(2);
    10.0 * (ps / pn).log10()
}

/// Crop or loop `noise` to exactly `len` samples, starting at `offset`.
pub fn fit_length(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    (0..len).map(|i| noise[(offset + i) % noise.len()]).collect()
}

/// Add `noise` to `signal` scaled so that the signal-to-noise ratio is
/// `snr_db`. The noise is cropped or looped to the signal length. If the sum
/// would exceed full scale, the whole mixture is scaled down (which leaves
/// the ratio untouched).
pub fn mix_with_snr(signal: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<Mixture> {
    mix_with_snr_at(signal, noise, snr_db, 0)
}

/// As [`mix_with_snr`], reading the noise from `offset`.
pub fn mix_with_snr_at(signal: &AudioClip, noise: &AudioClip, snr_db: f64, offset: usize) -> Result<Mixture> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(Error::domain(format!(
            "sample rates differ: {} vs {}",
            signal.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::domain("snr_db must be finite"));
    }
    let fitted = fit_length(noise.samples(), signal.len(), offset);
    let noise_rms = rms(&fitted);
    if noise_rms <= 0.0 {
        return Err(Error::DegenerateInput("noise has zero power".into()));
    }
    let signal_rms = signal.rms();
    let noise_gain = signal_rms / (noise_rms * 10f64.powf(snr_db / 20.0));

    let mut signal_part = signal.samples().to_vec();
    let mut noise_part: Vec<f64> = fitted.iter().map(|n| n * noise_gain).collect();
    let mut mixed: Vec<f64> = signal_part.iter().zip(&noise_part).map(|(s, n)| s + n).collect();

    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let output_scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if output_scale != 1.0 {
        for v in mixed
            .iter_mut()
            .chain(signal_part.iter_mut())
            .chain(noise_part.iter_mut())
        {
            *v *= output_scale;
        }
    }
    Ok(Mixture {
        clip: AudioClip::new(mixed, signal.sample_rate())?,
        noise_gain,
        output_scale,
        signal_part,
        noise_part,
    })
}
