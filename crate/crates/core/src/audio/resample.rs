//! Band-limited resampling with a Blackman-windowed sinc kernel.

use std::f64::consts::PI;

/// Kernel half-width in zero crossings of the low-pass sinc.
const ZERO_CROSSINGS: f64 = 24.0;
/// Pass-band edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let x = PI * (u + 1.0);
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

/// Resample `input` from `from_rate` to `to_rate` Hz.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to_rate as f64 / from_rate as f64;
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = ZERO_CROSSINGS / cutoff;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let n_in = input.len() as isize;

    (0..out_len)
        .map(|n| {
            let x = n as f64 / ratio;
            let lo = (x - half_width).ceil() as isize;
            let hi = (x + half_width).floor() as isize;
            let mut acc = 0.0;
            for k in lo.max(0)..=hi.min(n_in - 1) {
                let d = x - k as f64;
                acc += input[k as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc
        })
        .collect()
}
