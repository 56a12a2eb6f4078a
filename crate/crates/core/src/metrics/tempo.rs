use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::codec::{MelFilterbank, Stft};
use crate::error::{Error, Result};

pub const BPM_TOLERANCE: f64 = 5.0;
pub const MIN_TEMPO_BPM: f64 = 40.0;
pub const MAX_TEMPO_BPM: f64 = 200.0;

const WINDOW: usize = 1024;
const HOP: usize = 128;
const N_MELS: usize = 40;
const RANGE_DB: f64 = 80.0;
/// Gaussian smoothing of the envelope, in frames. Spreads onsets that fall
/// between frames so fractional beat lags keep their full peak height.
const SMOOTH_FRAMES: f64 = 2.0;
/// An envelope whose peak stays below this (dB summed over bands) has no
/// onsets.
pub const MIN_ONSET_DB: f64 = 10.0;

/// Tempo estimate plus octave-related alternatives whose autocorrelation
/// peak is at least half as strong as the winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoEstimate {
    pub bpm: Option<f64>,
    pub half: Option<f64>,
    pub double: Option<f64>,
}

impl TempoEstimate {
    pub fn none() -> Self {
        Self {
            bpm: None,
            half: None,
            double: None,
        }
    }
}

/// Rectified log-mel spectral flux with its local mean removed. Levels are
/// floored 80 dB below the clip maximum, so the envelope does not depend
/// on overall gain.
pub fn onset_envelope(clip: &AudioClip) -> Vec<f64> {
    let stft = Stft::new(WINDOW, HOP);
    let mel = MelFilterbank::new(N_MELS, WINDOW, clip.sample_rate());
    let mut frames: Vec<Vec<f64>> = stft
        .power(clip.samples())
        .iter()
        .map(|p| mel.apply(p).into_iter().map(|v| 10.0 * v.max(1e-300).log10()).collect())
        .collect();
    let top = frames.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in frames.iter_mut().flatten() {
        *v = v.max(top - RANGE_DB);
    }
    let flux: Vec<f64> = frames
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).max(0.0)).sum::<f64>())
        .collect();
    // Subtract a centered moving average (~0.25 s) and rectify again.
    let half = ((0.125 * clip.sample_rate() as f64) / HOP as f64).round() as usize;
    let n = flux.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + flux[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            (flux[i] - mean).max(0.0)
        })
        .collect()
}

fn gaussian_smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    (0..x.len() as isize)
        .map(|i| {
            (-r..=r)
                .filter_map(|k| {
                    usize::try_from(i + k)
                        .ok()
                        .and_then(|j| x.get(j))
                        .map(|v| v * kernel[(k + r) as usize])
                })
                .sum::<f64>()
                / total
        })
        .collect()
}

fn acf(env: &[f64], lag: usize) -> f64 {
    let n = env.len();
    if lag >= n {
        return 0.0;
    }
    env[..n - lag].iter().zip(&env[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

fn parabolic(ym: f64, y0: f64, yp: f64) -> f64 {
    let den = ym - 2.0 * y0 + yp;
    if den.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (ym - yp) / den).clamp(-0.5, 0.5)
    }
}

/// Autocorrelation tempo estimate over 40–200 BPM.
pub fn estimate_bpm(clip: &AudioClip) -> Result<TempoEstimate> {
    if clip.duration() < 4.0 - 1e-9 {
        return Err(Error::domain(format!(
            "tempo estimation needs at least 4 s, got {:.3} s",
            clip.duration()
        )));
    }
    let env = onset_envelope(clip);
    if env.iter().cloned().fold(0.0, f64::max) < MIN_ONSET_DB {
        return Ok(TempoEstimate::none());
    }
    let env = gaussian_smooth(&env, SMOOTH_FRAMES);
    let fps = clip.sample_rate() as f64 / HOP as f64;
    let lag_min = (60.0 / MAX_TEMPO_BPM * fps).floor() as usize;
    let lag_max = (60.0 / MIN_TEMPO_BPM * fps).ceil() as usize;
    let r: Vec<f64> = (0..=lag_max + 1).map(|l| acf(&env, l)).collect();
    let mut best = None;
    for l in lag_min.max(1)..=lag_max {
        let is_peak = r[l] >= r[l - 1] && r[l] > r[l + 1];
        if is_peak && best.is_none_or(|b: usize| r[l] > r[b]) {
            best = Some(l);
        }
    }
    let Some(l) = best else {
        return Ok(TempoEstimate::none());
    };
    if r[l] <= 0.0 {
        return Ok(TempoEstimate::none());
    }
    let refined = l as f64 + parabolic(r[l - 1], r[l], r[l + 1]);
    let bpm = (60.0 * fps / refined).clamp(MIN_TEMPO_BPM, MAX_TEMPO_BPM);
    let candidate = |target_lag: f64| -> Option<f64> {
        let c = target_lag.round() as usize;
        if c < 2 || c + 2 > r.len() {
            return None;
        }
        let (lo, hi) = (c.saturating_sub(2).max(1), (c + 2).min(r.len() - 2));
        let k = (lo..=hi).max_by(|&a, &b| r[a].total_cmp(&r[b]))?;
        let is_peak = r[k] >= r[k - 1] && r[k] >= r[k + 1];
        let b = 60.0 * fps / (k as f64 + parabolic(r[k - 1], r[k], r[k + 1]));
        (is_peak && r[k] >= 0.5 * r[l] && (MIN_TEMPO_BPM..=MAX_TEMPO_BPM).contains(&b)).then_some(b)
    };
    Ok(TempoEstimate {
        bpm: Some(bpm),
        half: candidate(refined * 2.0),
        double: candidate(refined / 2.0),
    })
}

/// `|gen − ref| ≤ 5` BPM, boundary inclusive.
pub fn bpm_match(gen_bpm: f64, ref_bpm: f64) -> bool {
    (gen_bpm - ref_bpm).abs() <= BPM_TOLERANCE
}

/// Whether the estimate matches `ref_bpm` only through an octave
/// alternative (half or double tempo).
pub fn octave_match(est: &TempoEstimate, ref_bpm: f64) -> bool {
    let direct = est.bpm.is_some_and(|b| bpm_match(b, ref_bpm));
    !direct && [est.half, est.double].iter().flatten().any(|&b| bpm_match(b, ref_bpm))
}
