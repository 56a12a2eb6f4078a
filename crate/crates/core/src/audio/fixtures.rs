//! Deterministic synthetic audio: click tracks, tonal arpeggios and noise
//! textures with known tempo, key and spectrum.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::clip::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::{gaussian, rng_from_seed};

pub const MIN_BPM: f64 = 40.0;
pub const MAX_BPM: f64 = 200.0;
const FIXTURE_PEAK: f64 = 0.8;

/// A pitch class, 0 = C through 11 = B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PitchClass(u8);

const PC_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

impl PitchClass {
    pub fn new(pc: u8) -> Result<Self> {
        if pc < 12 {
            Ok(Self(pc))
        } else {
            Err(Error::domain(format!("pitch class {pc} out of range 0..12")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transposed(self, semitones: i32) -> Self {
        Self((self.0 as i32 + semitones).rem_euclid(12) as u8)
    }

    pub fn name(self) -> &'static str {
        PC_NAMES[self.index()]
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('♯', "#");
        let flats = [("DB", 1), ("EB", 3), ("GB", 6), ("AB", 8), ("BB", 10)];
        let upper = norm.to_ascii_uppercase();
        if let Some(i) = PC_NAMES.iter().position(|n| *n == upper) {
            return Ok(Self(i as u8));
        }
        if let Some((_, i)) = flats.iter().find(|(n, _)| *n == upper) {
            return Ok(Self(*i));
        }
        Err(Error::domain(format!("unknown pitch class {s:?}")))
    }
}

impl Serialize for PitchClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PitchClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Major,
    Minor,
}

impl Scale {
    pub fn intervals(self) -> [u8; 7] {
        match self {
            Scale::Major => [0, 2, 4, 5, 7, 9, 11],
            Scale::Minor => [0, 2, 3, 5, 7, 8, 10],
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Major => "major",
            Scale::Minor => "minor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    White,
    Pink,
    Brown,
}

fn default_click_hz() -> f64 {
    1000.0
}
fn default_octave() -> i32 {
    4
}
fn default_brightness() -> f64 {
    1.0
}

/// What to synthesize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureKind {
    ClickTrack {
        bpm: f64,
        /// Center frequency of each click burst.
        #[serde(default = "default_click_hz")]
        click_hz: f64,
    },
    Tonal {
        key: PitchClass,
        scale: Scale,
        bpm: f64,
        #[serde(default = "default_octave")]
        octave: i32,
        /// Spectral tilt in [0, 2]; larger is brighter.
        #[serde(default = "default_brightness")]
        brightness: f64,
    },
    NoiseTexture {
        color: NoiseColor,
    },
}

impl FixtureKind {
    pub fn click_track(bpm: f64) -> Self {
        FixtureKind::ClickTrack {
            bpm,
            click_hz: default_click_hz(),
        }
    }

    pub fn tonal(key: PitchClass, scale: Scale, bpm: f64) -> Self {
        FixtureKind::Tonal {
            key,
            scale,
            bpm,
            octave: default_octave(),
            brightness: default_brightness(),
        }
    }

    pub fn noise(color: NoiseColor) -> Self {
        FixtureKind::NoiseTexture { color }
    }

    /// Nominal tempo, if the fixture has one.
    pub fn bpm(&self) -> Option<f64> {
        match *self {
            FixtureKind::ClickTrack { bpm, .. } | FixtureKind::Tonal { bpm, .. } => Some(bpm),
            FixtureKind::NoiseTexture { .. } => None,
        }
    }

    pub fn key(&self) -> Option<(PitchClass, Scale)> {
        match *self {
            FixtureKind::Tonal { key, scale, .. } => Some((key, scale)),
            _ => None,
        }
    }
}

fn check_bpm(bpm: f64) -> Result<()> {
    if !(MIN_BPM..=MAX_BPM).contains(&bpm) {
        return Err(Error::domain(format!("bpm {bpm} outside [{MIN_BPM}, {MAX_BPM}]")));
    }
    Ok(())
}

/// Onset sample indices of a beat grid: `round(k · 60/bpm · sr)`.
pub fn beat_onsets(bpm: f64, n_samples: usize, sample_rate: u32) -> Vec<usize> {
    let period = 60.0 / bpm * sample_rate as f64;
    (0..)
        .map(|k| (k as f64 * period).round() as usize)
        .take_while(|&n| n < n_samples)
        .collect()
}

/// Render a fixture. Identical `(kind, duration, seed)` always produce
/// bit-identical output.
pub fn synth_fixture(kind: &FixtureKind, duration: f64, seed: u64) -> Result<AudioClip> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!("duration {duration} must be positive")));
    }
    let n = (duration * SAMPLE_RATE as f64).round() as usize;
    let samples = match *kind {
        FixtureKind::ClickTrack { bpm, click_hz } => {
            check_bpm(bpm)?;
            click_track(bpm, click_hz, n, seed)
        }
        FixtureKind::Tonal {
            key,
            scale,
            bpm,
            octave,
            brightness,
        } => {
            check_bpm(bpm)?;
            tonal(key, scale, bpm, octave, brightness, n, seed)
        }
        FixtureKind::NoiseTexture { color } => noise_texture(color, n, seed),
    };
    Ok(AudioClip::new(samples, SAMPLE_RATE)?.normalized_to_peak(FIXTURE_PEAK))
}

fn click_track(bpm: f64, click_hz: f64, n: usize, seed: u64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let burst_len = (0.03 * sr) as usize;
    let mut rng = rng_from_seed(seed);
    // One shared burst keeps every click identical.
    let burst: Vec<f64> = (0..burst_len)
        .map(|i| {
            let t = i as f64 / sr;
            let env = (-t / 0.006).exp();
            let noise = if i == 0 { 0.0 } else { 0.3 * gaussian(&mut rng) };
            env * ((2.0 * PI * click_hz * t).cos() + noise)
        })
        .collect();
    let mut out = vec![0.0; n];
    for onset in beat_onsets(bpm, n, SAMPLE_RATE) {
        for (i, b) in burst.iter().enumerate() {
            if let Some(s) = out.get_mut(onset + i) {
                *s += b;
            }
        }
    }
    out
}

fn midi_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

fn add_tone(out: &mut [f64], start: usize, len: usize, hz: f64, amp: f64, brightness: f64, decay: f64) {
    let sr = SAMPLE_RATE as f64;
    let attack = 0.01 * sr;
    let release = (0.02 * sr) as usize;
    let n_harm = 6;
    for i in 0..len {
        let Some(slot) = out.get_mut(start + i) else {
            break;
        };
        let t = i as f64 / sr;
        let mut env = (i as f64 / attack).min(1.0) * (-t / decay).exp();
        if len > release && i >= len - release {
            env *= (len - i) as f64 / release as f64;
        }
        let mut v = 0.0;
        for h in 1..=n_harm {
            let f = hz * h as f64;
            if f >= sr * 0.45 {
                break;
            }
            v += (2.0 * PI * f * t).sin() / (h as f64).powf(2.5 - brightness.clamp(0.0, 2.0));
        }
        *slot += amp * env * v;
    }
}

fn tonal(key: PitchClass, scale: Scale, bpm: f64, octave: i32, brightness: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let root = 12.0 * (octave + 1) as f64 + key.index() as f64;
    let iv = scale.intervals();
    let degree_midi = |d: usize| root + 12.0 * (d / 7) as f64 + iv[d % 7] as f64;

    // Arpeggio patterns over scale degrees; triad tones dominate.
    const PATTERNS: [[usize; 8]; 4] = [
        [0, 2, 4, 7, 4, 2, 0, 4],
        [0, 4, 2, 4, 7, 4, 2, 1],
        [7, 4, 2, 0, 2, 4, 5, 4],
        [0, 2, 4, 2, 0, 4, 3, 2],
    ];
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];

    let mut out = vec![0.0; n];
    let onsets = beat_onsets(bpm, n, SAMPLE_RATE);
    for (k, &onset) in onsets.iter().enumerate() {
        let next = onsets.get(k + 1).copied().unwrap_or(n);
        let midi = degree_midi(pattern[k % pattern.len()]);
        let amp = 0.8 + 0.2 * rng.random::<f64>();
        add_tone(&mut out, onset, next - onset, midi_hz(midi), amp, brightness, 0.25);
    }
    // Quiet sustained tonic triad an octave below.
    for d in [0usize, 2, 4] {
        add_tone(&mut out, 0, n, midi_hz(degree_midi(d) - 12.0), 0.25, brightness, 1e9);
    }
    out
}

fn noise_texture(color: NoiseColor, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let white: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
    match color {
        NoiseColor::White => white,
        NoiseColor::Pink => {
            // Paul Kellet's refined pink filter.
            let (mut b0, mut b1, mut b2, mut b3, mut b4, mut b5, mut b6) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            white
                .iter()
                .map(|&w| {
                    b0 = 0.99886 * b0 + w * 0.0555179;
                    b1 = 0.99332 * b1 + w * 0.0750759;
                    b2 = 0.96900 * b2 + w * 0.1538520;
                    b3 = 0.86650 * b3 + w * 0.3104856;
                    b4 = 0.55000 * b4 + w * 0.5329522;
                    b5 = -0.7616 * b5 - w * 0.0168980;
                    let y = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
                    b6 = w * 0.115926;
                    y
                })
                .collect()
        }
        NoiseColor::Brown => {
            let mut acc = 0.0;
            let raw: Vec<f64> = white
                .iter()
                .map(|&w| {
                    acc = 0.995 * acc + 0.1 * w;
                    acc
                })
                .collect();
            // Remove the slow drift so the texture stays centered.
            let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
            raw.into_iter().map(|v| v - mean).collect()
        }
    }
}
