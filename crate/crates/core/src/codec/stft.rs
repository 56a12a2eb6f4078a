//! Short-time Fourier transform without centering padding.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub type Spectrum = Vec<Complex<f64>>;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Clone)]
pub struct Stft {
    window_len: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// (Σ w / 2)², the power of a full-scale sinusoid's peak bin.
    power_norm: f64,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("window_len", &self.window_len)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Stft {
    pub fn new(window_len: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let window = hann(window_len);
        let wsum: f64 = window.iter().sum();
        Self {
            window_len,
            hop,
            forward: planner.plan_fft_forward(window_len),
            inverse: planner.plan_fft_inverse(window_len),
            power_norm: (wsum / 2.0).powi(2),
            window,
        }
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// `floor((len - window) / hop) + 1`, or 0 when the signal is shorter
    /// than one window.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn bin_hz(&self, bin: usize, sample_rate: u32) -> f64 {
        bin as f64 * sample_rate as f64 / self.window_len as f64
    }

    /// Complex spectra (non-negative frequencies only) of every frame.
    pub fn analyze(&self, signal: &[f64]) -> Vec<Spectrum> {
        let n_frames = self.n_frames(signal.len());
        let mut buf = vec![Complex::new(0.0, 0.0); self.window_len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        (0..n_frames)
            .map(|f| {
                let start = f * self.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(signal[start + i] * self.window[i], 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                buf[..self.n_bins()].to_vec()
            })
            .collect()
    }

    /// Power spectra normalized so a full-scale sinusoid peaks near 1.
    pub fn power(&self, signal: &[f64]) -> Vec<Vec<f64>> {
        self.analyze(signal)
            .into_iter()
            .map(|spec| spec.iter().map(|c| c.norm_sqr() / self.power_norm).collect())
            .collect()
    }

    pub fn power_norm(&self) -> f64 {
        self.power_norm
    }

    /// Weighted overlap-add inverse. Samples whose window-energy sum falls
    /// below a small fraction of the peak are attenuated rather than
    /// amplified.
    pub fn synthesize(&self, frames: &[Spectrum], len: usize) -> Vec<f64> {
        let n = self.window_len;
        let mut out = vec![0.0; len];
        let mut wsq = vec![0.0; len];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for (f, spec) in frames.iter().enumerate() {
            let nb = self.n_bins();
            buf[..nb].copy_from_slice(&spec[..nb]);
            // Hermitian mirror; DC and Nyquist must be real.
            buf[0].im = 0.0;
            buf[nb - 1].im = 0.0;
            for k in nb..n {
                buf[k] = buf[n - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = f * self.hop;
            for i in 0..n {
                let idx = start + i;
                if idx >= len {
                    break;
                }
                let w = self.window[i];
                out[idx] += buf[i].re / n as f64 * w;
                wsq[idx] += w * w;
            }
        }
        let peak = wsq.iter().fold(0.0f64, |m, v| m.max(*v));
        let floor = 0.1 * peak;
        for (o, w) in out.iter_mut().zip(&wsq) {
            *o /= w.max(floor).max(f64::MIN_POSITIVE);
        }
        out
    }
}
