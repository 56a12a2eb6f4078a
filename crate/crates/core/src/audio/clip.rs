use crate::error::{Error, Result};

/// Canonical internal sample rate.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono PCM audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Wrap samples, rejecting non-finite values.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::domain("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Scale down so the peak is at most 1. Quieter clips are left alone.
    pub fn peak_normalized(mut self) -> Self {
        let peak = self.peak();
        if peak > 1.0 {
            for s in &mut self.samples {
                *s /= peak;
            }
        }
        self
    }

    /// Scale so the peak equals `target` exactly (no-op on silence).
    pub fn normalized_to_peak(mut self, target: f64) -> Self {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            for s in &mut self.samples {
                *s *= g;
            }
        }
        self
    }

    pub fn scaled(mut self, gain: f64) -> Self {
        for s in &mut self.samples {
            *s *= gain;
        }
        self
    }

    /// Samples `[start, start + len)`, zero-padded past the end.
    pub fn slice(&self, start: usize, len: usize) -> AudioClip {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let end = (start + len).min(self.samples.len());
            out[..end - start].copy_from_slice(&self.samples[start..end]);
        }
        AudioClip {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    pub fn concat(clips: &[AudioClip]) -> Result<AudioClip> {
        let sample_rate = clips.first().map_or(SAMPLE_RATE, |c| c.sample_rate);
        if clips.iter().any(|c| c.sample_rate != sample_rate) {
            return Err(Error::domain("cannot concatenate clips of different sample rates"));
        }
        let samples = clips.iter().flat_map(|c| c.samples.iter().copied()).collect();
        Ok(AudioClip { samples, sample_rate })
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}
