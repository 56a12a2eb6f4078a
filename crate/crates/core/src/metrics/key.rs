use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, PitchClass, Scale};
use crate::codec::Stft;
use crate::error::{Error, Result};

const WINDOW: usize = 4096;
const HOP: usize = 2048;
const MIN_HZ: f64 = 80.0;
const MAX_HZ: f64 = 5000.0;
const MAX_PEAKS: usize = 40;
const PEAK_FLOOR_DB: f64 = -60.0;
const HARMONICS: usize = 4;
const HARMONIC_DECAY: f64 = 0.8;
/// Width (in semitones) of the cos² window spreading a peak over bins.
const BIN_WINDOW: f64 = 4.0 / 3.0;
/// Minimum spread of the 24 key correlations.
pub const MIN_CORRELATION_SPREAD: f64 = 0.05;
/// Minimum coefficient of variation of the pitch-class profile.
pub const MIN_PROFILE_CONTRAST: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KeyProfile {
    #[default]
    Temperley,
    Krumhansl,
}

impl KeyProfile {
    /// Major and minor profiles, tonic first.
    pub fn profiles(self) -> ([f64; 12], [f64; 12]) {
        match self {
            KeyProfile::Temperley => (
                [5.0, 2.0, 3.5, 2.0, 4.5, 4.0, 2.0, 4.5, 2.0, 3.5, 1.5, 4.0],
                [5.0, 2.0, 3.5, 4.5, 2.0, 4.0, 2.0, 4.5, 3.5, 2.0, 1.5, 4.0],
            ),
            KeyProfile::Krumhansl => (
                [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88],
                [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17],
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEstimate {
    pub key: PitchClass,
    pub scale: Scale,
}

/// Spectral peaks `(hz, magnitude)` of one frame: local maxima within
/// 60 dB of the frame maximum, frequency refined by parabolic
/// interpolation of the log magnitude.
fn spectral_peaks(mag: &[f64], bin_hz: f64) -> Vec<(f64, f64)> {
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = max * 10f64.powf(PEAK_FLOOR_DB / 20.0);
    let mut peaks = Vec::new();
    for k in 1..mag.len() - 1 {
        let hz = k as f64 * bin_hz;
        if !(MIN_HZ..=MAX_HZ).contains(&hz) {
            continue;
        }
        if mag[k] > floor && mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] {
            let (a, b, c) = (mag[k - 1].max(1e-300).ln(), mag[k].ln(), mag[k + 1].max(1e-300).ln());
            let den = a - 2.0 * b + c;
            let delta = if den.abs() > 1e-12 {
                (0.5 * (a - c) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let peak_mag = (b - 0.25 * (a - c) * delta).exp();
            peaks.push(((k as f64 + delta) * bin_hz, peak_mag));
        }
    }
    peaks.sort_by(|x, y| y.1.total_cmp(&x.1));
    peaks.truncate(MAX_PEAKS);
    peaks
}

/// Time-averaged harmonic pitch-class profile, normalized to max 1.
/// Bin 0 is C.
pub fn hpcp(clip: &AudioClip) -> [f64; 12] {
    let stft = Stft::new(WINDOW, HOP);
    let sr = clip.sample_rate();
    let bin_hz = stft.bin_hz(1, sr);
    let mut acc = [0.0; 12];
    for spectrum in stft.analyze(clip.samples()) {
        let mag: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
        let mut frame = [0.0; 12];
        for (hz, m) in spectral_peaks(&mag, bin_hz) {
            for h in 1..=HARMONICS {
                let f0 = hz / h as f64;
                if f0 < 20.0 {
                    break;
                }
                let weight = HARMONIC_DECAY.powi(h as i32 - 1) * m * m;
                let pitch = 12.0 * (f0 / 440.0).log2() + 9.0;
                for (b, slot) in frame.iter_mut().enumerate() {
                    let mut d = (pitch - b as f64).rem_euclid(12.0);
                    if d > 6.0 {
                        d -= 12.0;
                    }
                    if d.abs() <= BIN_WINDOW / 2.0 {
                        *slot += weight * (std::f64::consts::PI * d / BIN_WINDOW).cos().powi(2);
                    }
                }
            }
        }
        let fmax = frame.iter().cloned().fold(0.0, f64::max);
        if fmax > 0.0 {
            for (a, f) in acc.iter_mut().zip(frame) {
                *a += f / fmax;
            }
        }
    }
    let max = acc.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for a in &mut acc {
            *a /= max;
        }
    }
    acc
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Correlations of a profile with the 24 keys, ordered
/// `(C major, C minor, C# major, ...)`.
pub fn key_correlations(profile: &[f64; 12], which: KeyProfile) -> Vec<(PitchClass, Scale, f64)> {
    let (major, minor) = which.profiles();
    let mut out = Vec::with_capacity(24);
    for tonic in 0..12u8 {
        for (scale, base) in [(Scale::Major, &major), (Scale::Minor, &minor)] {
            let rotated: Vec<f64> = (0..12).map(|pc| base[(pc + 12 - tonic as usize) % 12]).collect();
            out.push((PitchClass::new(tonic).unwrap(), scale, pearson(profile, &rotated)));
        }
    }
    out
}

/// Key from a pitch-class profile, or `None` if the profile is too flat.
pub fn key_from_profile(profile: &[f64; 12], which: KeyProfile) -> Option<KeyEstimate> {
    let mean = profile.iter().sum::<f64>() / 12.0;
    if mean <= 0.0 {
        return None;
    }
    let cv = (profile.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 12.0).sqrt() / mean;
    if cv < MIN_PROFILE_CONTRAST {
        return None;
    }
    let corr = key_correlations(profile, which);
    let hi = corr.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let lo = corr.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    if hi - lo < MIN_CORRELATION_SPREAD {
        return None;
    }
    // Iteration order already puts lower pitch classes and major first, so
    // the first maximum wins ties.
    let mut best = corr[0];
    for c in &corr[1..] {
        if c.2 > best.2 {
            best = *c;
        }
    }
    Some(KeyEstimate {
        key: best.0,
        scale: best.1,
    })
}

/// HPCP key detection on a clip of at least 2 s.
pub fn detect_key(clip: &AudioClip, which: KeyProfile) -> Result<Option<KeyEstimate>> {
    if clip.duration() < 2.0 - 1e-9 {
        return Err(Error::domain(format!(
            "key detection needs at least 2 s, got {:.3} s",
            clip.duration()
        )));
    }
    Ok(key_from_profile(&hpcp(clip), which))
}

/// Most frequent `(key, scale)` among estimates; ties go to the earliest
/// pitch class, major first.
pub fn modal_key(estimates: &[Option<KeyEstimate>]) -> Option<KeyEstimate> {
    let mut counts = [[0usize; 2]; 12];
    for e in estimates.iter().flatten() {
        counts[e.key.index()][matches!(e.scale, Scale::Minor) as usize] += 1;
    }
    let mut best: Option<(usize, KeyEstimate)> = None;
    for (pc, row) in counts.iter().enumerate() {
        for (s, &n) in row.iter().enumerate() {
            if n > 0 && best.is_none_or(|(b, _)| n > b) {
                let scale = if s == 0 { Scale::Major } else { Scale::Minor };
                best = Some((
                    n,
                    KeyEstimate {
                        key: PitchClass::new(pc as u8).unwrap(),
                        scale,
                    },
                ));
            }
        }
    }
    best.map(|b| b.1)
}

/// Componentwise comparison against the modal key of the reference set.
pub fn key_scale_match(gen: &KeyEstimate, reference: &KeyEstimate) -> (bool, bool) {
    (gen.key == reference.key, gen.scale == reference.scale)
}
