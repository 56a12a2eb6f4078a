//! Biquad sections (RBJ cookbook designs) and a small Schroeder reverb.

use std::f64::consts::PI;

/// Direct-form-I biquad with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a }
    }

    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    pub fn lowpass(cutoff: f64, q: f64, sr: f64) -> Self {
        let w = 2.0 * PI * cutoff / sr;
        let (c, alpha) = (w.cos(), w.sin() / (2.0 * q));
        Self::normalized(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn highpass(cutoff: f64, q: f64, sr: f64) -> Self {
        let w = 2.0 * PI * cutoff / sr;
        let (c, alpha) = (w.cos(), w.sin() / (2.0 * q));
        Self::normalized(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Constant 0 dB peak gain band-pass.
    pub fn bandpass(center: f64, q: f64, sr: f64) -> Self {
        let w = 2.0 * PI * center / sr;
        let (c, alpha) = (w.cos(), w.sin() / (2.0 * q));
        Self::normalized([alpha, 0.0, -alpha], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&xi| {
                let y = self.b[0] * xi + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                x2 = x1;
                x1 = xi;
                y2 = y1;
                y1 = y;
                y
            })
            .collect()
    }

    /// Magnitude response at `hz`.
    pub fn gain_at(&self, hz: f64, sr: f64) -> f64 {
        let w = 2.0 * PI * hz / sr;
        let z1 = cis(w);
        let z2 = cis(2.0 * w);
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            -(self.b[1] * z1.1 + self.b[2] * z2.1),
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            -(self.a[0] * z1.1 + self.a[1] * z2.1),
        );
        ((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1)).sqrt()
    }
}

fn cis(w: f64) -> (f64, f64) {
    (w.cos(), w.sin())
}

/// Run a cascade of sections.
pub fn cascade(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    sections.iter().fold(x.to_vec(), |acc, s| s.process(&acc))
}

fn comb(x: &[f64], delay: usize, feedback: f64, damp: f64) -> Vec<f64> {
    let mut buf = vec![0.0; delay];
    let mut idx = 0;
    let mut lp = 0.0;
    x.iter()
        .map(|&xi| {
            let y = buf[idx];
            lp = y * (1.0 - damp) + lp * damp;
            buf[idx] = xi + lp * feedback;
            idx = (idx + 1) % delay;
            y
        })
        .collect()
}

fn allpass(x: &[f64], delay: usize, g: f64) -> Vec<f64> {
    let mut buf = vec![0.0; delay];
    let mut idx = 0;
    x.iter()
        .map(|&xi| {
            let d = buf[idx];
            let y = -g * xi + d;
            buf[idx] = xi + g * y;
            idx = (idx + 1) % delay;
            y
        })
        .collect()
}

/// Schroeder reverb: four parallel damped combs into two allpasses.
/// `decay_s` is roughly the RT60; `wet` the dry/wet mix.
pub fn reverb(x: &[f64], sr: f64, decay_s: f64, wet: f64) -> Vec<f64> {
    let delays_ms = [29.7, 37.1, 41.1, 43.7];
    let mut acc = vec![0.0; x.len()];
    for d in delays_ms {
        let delay = ((d / 1000.0) * sr).round() as usize;
        let feedback = 10f64.powf(-3.0 * (d / 1000.0) / decay_s.max(1e-3));
        for (a, v) in acc.iter_mut().zip(comb(x, delay, feedback, 0.2)) {
            *a += v / 4.0;
        }
    }
    let acc = allpass(&acc, (0.005 * sr) as usize, 0.7);
    let acc = allpass(&acc, (0.0017 * sr) as usize, 0.7);
    x.iter().zip(&acc).map(|(d, w)| (1.0 - wet) * d + wet * w).collect()
}
