//! The synthetic world: instruments rendered from fixtures, the prompt
//! modifiers that realize editability prompts as audio transforms, the
//! labeled pretraining corpus, and the noise pool used for mixing.
//!
//! Prompt templates use `{}` where the concept phrase goes.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{
    mix_with_snr_at, reverb, synth_fixture, AudioClip, Biquad, FixtureKind, NoiseColor, PitchClass, Scale, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{child_seed, child_seed_index, rng_from_seed};
use crate::text::Vocab;

/// Rare token reused as the DreamBooth identifier.
pub const IDENTIFIER: &str = "sks";

/// Neutral prompt templates used while personalizing.
pub const NEUTRAL_TEMPLATES: [&str; 2] = ["a recording of a {}", "a {}"];

const PEAK: f64 = 0.8;

/// Fill a `{}` template.
pub fn fill(template: &str, phrase: &str) -> String {
    template.replace("{}", phrase)
}

/// Remove the concept slot from a template, collapsing whitespace.
pub fn strip_slot(template: &str) -> String {
    template
        .replace("{}", " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// One fixture layer of a rendered clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(flatten)]
    pub kind: FixtureKind,
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

impl Layer {
    pub fn new(kind: FixtureKind, gain: f64) -> Self {
        Self { kind, gain }
    }
}

/// Sum fixture layers (each rendered at peak 0.8 and scaled by its gain)
/// and normalize the mix to peak 0.8.
pub fn render_layers(layers: &[Layer], duration: f64, seed: u64) -> Result<AudioClip> {
    if layers.is_empty() {
        return Err(Error::domain("a clip needs at least one layer"));
    }
    let mut acc: Option<Vec<f64>> = None;
    for (i, layer) in layers.iter().enumerate() {
        let clip = synth_fixture(&layer.kind, duration, child_seed_index(seed, "layer", i))?;
        match &mut acc {
            None => acc = Some(clip.samples().iter().map(|s| s * layer.gain).collect()),
            Some(a) => {
                for (x, s) in a.iter_mut().zip(clip.samples()) {
                    *x += s * layer.gain;
                }
            }
        }
    }
    Ok(AudioClip::new(acc.unwrap(), SAMPLE_RATE)?.normalized_to_peak(PEAK))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Percussion,
    Melodic,
    MultiInstrument,
    Ambient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instrument {
    ClickTrack,
    Woodblock,
    KickDrum,
    Shaker,
    Cowbell,
    Tom,
    Piano,
    Bass,
    Bells,
    Flute,
    Organ,
    SynthLead,
    Band,
    Duo,
    Trio,
    Rain,
    Wind,
    Static,
}

impl Instrument {
    pub const ALL: [Instrument; 18] = [
        Instrument::ClickTrack,
        Instrument::Woodblock,
        Instrument::KickDrum,
        Instrument::Shaker,
        Instrument::Cowbell,
        Instrument::Tom,
        Instrument::Piano,
        Instrument::Bass,
        Instrument::Bells,
        Instrument::Flute,
        Instrument::Organ,
        Instrument::SynthLead,
        Instrument::Band,
        Instrument::Duo,
        Instrument::Trio,
        Instrument::Rain,
        Instrument::Wind,
        Instrument::Static,
    ];

    pub fn class_noun(self) -> &'static str {
        match self {
            Instrument::ClickTrack => "click track",
            Instrument::Woodblock => "woodblock",
            Instrument::KickDrum => "kick drum",
            Instrument::Shaker => "shaker",
            Instrument::Cowbell => "cowbell",
            Instrument::Tom => "tom drum",
            Instrument::Piano => "piano",
            Instrument::Bass => "bass",
            Instrument::Bells => "bells",
            Instrument::Flute => "flute",
            Instrument::Organ => "organ",
            Instrument::SynthLead => "synth lead",
            Instrument::Band => "band",
            Instrument::Duo => "duo",
            Instrument::Trio => "trio",
            Instrument::Rain => "rain",
            Instrument::Wind => "wind",
            Instrument::Static => "static",
        }
    }

    pub fn from_noun(noun: &str) -> Option<Self> {
        let noun = noun.trim().to_lowercase();
        Self::ALL.into_iter().find(|i| i.class_noun() == noun)
    }

    pub fn category(self) -> Category {
        use Instrument::*;
        match self {
            ClickTrack | Woodblock | KickDrum | Shaker | Cowbell | Tom => Category::Percussion,
            Piano | Bass | Bells | Flute | Organ | SynthLead => Category::Melodic,
            Band | Duo | Trio => Category::MultiInstrument,
            Rain | Wind | Static => Category::Ambient,
        }
    }

    /// Layers for one random instance of this instrument.
    pub fn random_layers<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<Layer> {
        let bpm = rng.random_range(60.0..180.0);
        let key = PitchClass::new(rng.random_range(0..12)).unwrap();
        let scale = if rng.random_bool(0.5) {
            Scale::Major
        } else {
            Scale::Minor
        };
        let click = |lo: f64, hi: f64, rng: &mut R| FixtureKind::ClickTrack {
            bpm,
            click_hz: rng.random_range(lo..hi),
        };
        let tonal = |octave: i32, lo: f64, hi: f64, rng: &mut R| FixtureKind::Tonal {
            key,
            scale,
            bpm,
            octave,
            brightness: rng.random_range(lo..hi),
        };
        use Instrument::*;
        let kinds: Vec<(FixtureKind, f64)> = match self {
            ClickTrack => vec![(click(900.0, 1300.0, rng), 1.0)],
            Woodblock => vec![(click(2000.0, 2800.0, rng), 1.0)],
            KickDrum => vec![(click(60.0, 110.0, rng), 1.0)],
            Shaker => vec![(click(5000.0, 6500.0, rng), 1.0)],
            Cowbell => vec![(click(700.0, 850.0, rng), 1.0)],
            Tom => vec![(click(150.0, 260.0, rng), 1.0)],
            Piano => vec![(tonal(4, 0.8, 1.2, rng), 1.0)],
            Bass => vec![(tonal(2, 0.3, 0.7, rng), 1.0)],
            Bells => vec![(tonal(6, 1.4, 1.8, rng), 1.0)],
            Flute => vec![(tonal(5, 0.0, 0.3, rng), 1.0)],
            Organ => vec![(tonal(3, 1.0, 1.4, rng), 1.0)],
            SynthLead => vec![(tonal(5, 1.7, 2.0, rng), 1.0)],
            Band => vec![(tonal(4, 0.8, 1.2, rng), 1.0), (click(60.0, 110.0, rng), 0.6)],
            Duo => vec![(tonal(2, 0.3, 0.7, rng), 1.0), (tonal(6, 1.4, 1.8, rng), 0.5)],
            Trio => vec![
                (tonal(2, 0.3, 0.7, rng), 1.0),
                (tonal(4, 0.8, 1.2, rng), 0.7),
                (click(5000.0, 6500.0, rng), 0.4),
            ],
            Rain => vec![(FixtureKind::noise(NoiseColor::Pink), 1.0)],
            Wind => vec![(FixtureKind::noise(NoiseColor::Brown), 1.0)],
            Static => vec![(FixtureKind::noise(NoiseColor::White), 1.0)],
        };
        kinds.into_iter().map(|(k, g)| Layer::new(k, g)).collect()
    }
}

/// Words describing tempo and mode, derived from a layer set.
pub fn descriptors(layers: &[Layer]) -> Vec<&'static str> {
    let mut out = Vec::new();
    if let Some(bpm) = layers.iter().find_map(|l| l.kind.bpm()) {
        if bpm < 90.0 {
            out.push("slow");
        } else if bpm > 140.0 {
            out.push("fast");
        }
    }
    if let Some((_, scale)) = layers.iter().find_map(|l| l.kind.key()) {
        out.push(match scale {
            Scale::Major => "major",
            Scale::Minor => "minor",
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Genre,
    Recording,
    Accompaniment,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Effect {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
    Reverb(f64, f64),
    Distort(f64),
    Quantize(u32),
    /// Add an instrument layer at the given SNR (signal over layer).
    Layer(Instrument, f64),
    /// Add a tempo-locked click layer (`click_hz`, bpm multiplier, SNR).
    Beat(f64, f64, f64),
    Noise(NoiseColor, f64),
    Crowd(f64),
    Birds(f64),
}

/// An editability prompt and the audio transform that realizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Modifier {
    pub axis: Axis,
    pub template: &'static str,
    effects: &'static [Effect],
}

use Effect::*;

pub const MODIFIERS: [Modifier; 20] = [
    Modifier {
        axis: Axis::Genre,
        template: "a {} in a techno style",
        effects: &[Beat(80.0, 1.0, 3.0), Distort(2.0)],
    },
    Modifier {
        axis: Axis::Genre,
        template: "a {} in an ambient style",
        effects: &[Lowpass(2500.0), Reverb(2.5, 0.6)],
    },
    Modifier {
        axis: Axis::Genre,
        template: "a {} in a rock style",
        effects: &[Distort(6.0), Beat(200.0, 1.0, 4.0)],
    },
    Modifier {
        axis: Axis::Genre,
        template: "a {} in a chiptune style",
        effects: &[Quantize(3), Highpass(400.0)],
    },
    Modifier {
        axis: Axis::Genre,
        template: "a {} in a dub style",
        effects: &[Lowpass(900.0), Reverb(1.5, 0.5), Layer(Instrument::Bass, 3.0)],
    },
    Modifier {
        axis: Axis::Recording,
        template: "a {} recorded through a telephone",
        effects: &[Bandpass(1000.0, 0.9)],
    },
    Modifier {
        axis: Axis::Recording,
        template: "a {} recorded in a large hall",
        effects: &[Reverb(1.8, 0.7)],
    },
    Modifier {
        axis: Axis::Recording,
        template: "a {} recorded underwater",
        effects: &[Lowpass(400.0)],
    },
    Modifier {
        axis: Axis::Recording,
        template: "a lo-fi recording of a {}",
        effects: &[Lowpass(3000.0), Quantize(5), Noise(NoiseColor::White, 25.0)],
    },
    Modifier {
        axis: Axis::Recording,
        template: "a distorted recording of a {}",
        effects: &[Distort(10.0)],
    },
    Modifier {
        axis: Axis::Accompaniment,
        template: "a {} with drums",
        effects: &[Beat(90.0, 1.0, 2.0)],
    },
    Modifier {
        axis: Axis::Accompaniment,
        template: "a {} with a bass line",
        effects: &[Layer(Instrument::Bass, 2.0)],
    },
    Modifier {
        axis: Axis::Accompaniment,
        template: "a {} with piano chords",
        effects: &[Layer(Instrument::Piano, 2.0)],
    },
    Modifier {
        axis: Axis::Accompaniment,
        template: "a {} with bells",
        effects: &[Layer(Instrument::Bells, 2.0)],
    },
    Modifier {
        axis: Axis::Accompaniment,
        template: "a {} with a shaker",
        effects: &[Beat(6000.0, 2.0, 2.0)],
    },
    Modifier {
        axis: Axis::Background,
        template: "a {} with rain in the background",
        effects: &[Noise(NoiseColor::Pink, 5.0)],
    },
    Modifier {
        axis: Axis::Background,
        template: "a {} with wind in the background",
        effects: &[Noise(NoiseColor::Brown, 5.0)],
    },
    Modifier {
        axis: Axis::Background,
        template: "a {} with radio static in the background",
        effects: &[Noise(NoiseColor::White, 8.0)],
    },
    Modifier {
        axis: Axis::Background,
        template: "a {} with crowd noise in the background",
        effects: &[Crowd(5.0)],
    },
    Modifier {
        axis: Axis::Background,
        template: "a {} with birds in the background",
        effects: &[Birds(6.0)],
    },
];

/// The shipped editability prompt list, in order.
pub fn editability_templates() -> Vec<&'static str> {
    MODIFIERS.iter().map(|m| m.template).collect()
}

pub fn modifier_for(template: &str) -> Option<&'static Modifier> {
    MODIFIERS.iter().find(|m| m.template == template)
}

fn add_at_snr(x: &[f64], layer: &[f64], snr: f64) -> Result<Vec<f64>> {
    let s = AudioClip::new(x.to_vec(), SAMPLE_RATE)?;
    let n = AudioClip::new(layer.to_vec(), SAMPLE_RATE)?;
    if s.rms() == 0.0 {
        return Ok(layer.to_vec());
    }
    Ok(mix_with_snr_at(&s, &n, snr, 0)?.clip.into_samples())
}

fn first_bpm(layers: &[Layer]) -> f64 {
    layers.iter().find_map(|l| l.kind.bpm()).unwrap_or(100.0)
}

impl Modifier {
    /// Apply to a clip rendered from `layers` (used to lock tempo-synced
    /// accompaniment to the source grid).
    pub fn apply(&self, clip: &AudioClip, layers: &[Layer], seed: u64) -> Result<AudioClip> {
        let sr = SAMPLE_RATE as f64;
        let dur = clip.duration();
        let mut x = clip.samples().to_vec();
        for (i, effect) in self.effects.iter().enumerate() {
            let seed = child_seed_index(seed, "effect", i);
            x = match *effect {
                Lowpass(f) => Biquad::lowpass(f, 0.707, sr).process(&Biquad::lowpass(f, 0.707, sr).process(&x)),
                Highpass(f) => Biquad::highpass(f, 0.707, sr).process(&x),
                Bandpass(f, q) => Biquad::bandpass(f, q, sr).process(&x),
                Reverb(decay, wet) => reverb(&x, sr, decay, wet),
                Distort(drive) => x.iter().map(|v| (drive * v).tanh() / drive.tanh()).collect(),
                Quantize(bits) => {
                    let levels = (1u32 << bits) as f64 / 2.0;
                    x.iter().map(|v| (v * levels).round() / levels).collect()
                }
                Layer(inst, snr) => {
                    let mut rng = rng_from_seed(seed);
                    let mut extra = inst.random_layers(&mut rng);
                    let bpm = first_bpm(layers);
                    for l in &mut extra {
                        set_bpm(&mut l.kind, bpm);
                    }
                    let audio = render_layers(&extra, dur, seed)?;
                    add_at_snr(&x, audio.samples(), snr)?
                }
                Beat(click_hz, mult, snr) => {
                    let bpm = (first_bpm(layers) * mult).clamp(40.0, 200.0);
                    let audio = synth_fixture(&FixtureKind::ClickTrack { bpm, click_hz }, dur, seed)?;
                    add_at_snr(&x, audio.samples(), snr)?
                }
                Noise(color, snr) => {
                    let audio = synth_fixture(&FixtureKind::noise(color), dur, seed)?;
                    add_at_snr(&x, audio.samples(), snr)?
                }
                Crowd(snr) => {
                    let audio = crowd(x.len(), seed)?;
                    add_at_snr(&x, &audio, snr)?
                }
                Birds(snr) => {
                    let audio = birds(x.len(), seed);
                    add_at_snr(&x, &audio, snr)?
                }
            };
        }
        Ok(AudioClip::new(x, SAMPLE_RATE)?.normalized_to_peak(PEAK))
    }
}

fn set_bpm(kind: &mut FixtureKind, new_bpm: f64) {
    match kind {
        FixtureKind::ClickTrack { bpm, .. } | FixtureKind::Tonal { bpm, .. } => *bpm = new_bpm,
        FixtureKind::NoiseTexture { .. } => {}
    }
}

/// Band-limited pink noise with a slow random loudness envelope.
fn crowd(n: usize, seed: u64) -> Result<Vec<f64>> {
    let sr = SAMPLE_RATE as f64;
    let base = synth_fixture(&FixtureKind::noise(NoiseColor::Pink), n as f64 / sr, seed)?;
    let band = Biquad::bandpass(900.0, 0.6, sr).process(base.samples());
    let mut rng = rng_from_seed(child_seed(seed, &["envelope"]));
    let knots: Vec<f64> = (0..(n / 4000 + 2)).map(|_| rng.random_range(0.3..1.0)).collect();
    Ok(band
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let pos = i as f64 / 4000.0;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            v * (knots[k] * (1.0 - frac) + knots[k + 1] * frac)
        })
        .collect())
}

/// Short upward chirps at random times.
fn birds(n: usize, seed: u64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0.0; n];
    let count = (n as f64 / sr * 6.0).ceil() as usize;
    for _ in 0..count {
        let start = rng.random_range(0..n.max(1));
        let f0 = rng.random_range(2500.0..4000.0);
        let len = (0.06 * sr) as usize;
        let mut phase = 0.0;
        for i in 0..len {
            let Some(s) = out.get_mut(start + i) else { break };
            let t = i as f64 / len as f64;
            let f = f0 * (1.0 + 0.5 * t);
            phase += 2.0 * std::f64::consts::PI * f / sr;
            *s += (std::f64::consts::PI * t).sin() * phase.sin();
        }
    }
    out
}

/// Every word the shipped world can produce, plus the identifier.
pub fn base_vocabulary<S: AsRef<str>>(extra_prompts: &[S]) -> Vocab {
    let mut words: Vec<String> = Vec::new();
    words.extend(NEUTRAL_TEMPLATES.iter().map(|t| strip_slot(t)));
    words.extend(MODIFIERS.iter().map(|m| strip_slot(m.template)));
    words.extend(extra_prompts.iter().map(|p| strip_slot(p.as_ref())));
    words.extend(Instrument::ALL.iter().map(|i| i.class_noun().to_string()));
    words.extend(["slow", "fast", "major", "minor"].map(String::from));
    words.push(IDENTIFIER.to_string());
    Vocab::from_words(words)
}

/// A captioned clip of the pretraining corpus.
#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub label: String,
    pub instrument: Instrument,
    pub modifier: Option<usize>,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub clips_per_instrument: usize,
    pub clip_seconds: f64,
    /// Chance that a clip is rendered through a random editability modifier.
    pub modifier_prob: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            clips_per_instrument: 24,
            clip_seconds: 2.0,
            modifier_prob: 0.5,
        }
    }
}

/// Caption for an instance: neutral template or modifier template around
/// the descriptor-plus-noun phrase.
fn caption<R: Rng + ?Sized>(inst: Instrument, layers: &[Layer], modifier: Option<usize>, rng: &mut R) -> String {
    let mut phrase: Vec<&str> = descriptors(layers);
    if rng.random_bool(0.3) {
        phrase.clear();
    }
    phrase.push(inst.class_noun());
    let phrase = phrase.join(" ");
    match modifier {
        Some(m) => fill(MODIFIERS[m].template, &phrase),
        None => fill(NEUTRAL_TEMPLATES.choose(rng).unwrap(), &phrase),
    }
}

/// Render the labeled pretraining corpus.
pub fn pretraining_corpus(cfg: &CorpusConfig, seed: u64, exec: Exec) -> Result<Vec<LabeledClip>> {
    if cfg.clips_per_instrument == 0 {
        return Err(Error::domain("corpus needs at least one clip per instrument"));
    }
    let jobs: Vec<(Instrument, usize)> = Instrument::ALL
        .iter()
        .flat_map(|&i| (0..cfg.clips_per_instrument).map(move |k| (i, k)))
        .collect();
    par::try_map(exec, &jobs, |&(inst, k)| {
        let clip_seed = child_seed(seed, &["corpus", inst.class_noun(), &k.to_string()]);
        let mut rng = rng_from_seed(clip_seed);
        let layers = inst.random_layers(&mut rng);
        let modifier = (inst.category() != Category::Ambient && rng.random_bool(cfg.modifier_prob))
            .then(|| rng.random_range(0..MODIFIERS.len()));
        let label = caption(inst, &layers, modifier, &mut rng);
        let mut clip = render_layers(&layers, cfg.clip_seconds, clip_seed)?;
        if let Some(m) = modifier {
            clip = MODIFIERS[m].apply(&clip, &layers, child_seed(clip_seed, &["modifier"]))?;
        }
        Ok(LabeledClip {
            label,
            instrument: inst,
            modifier,
            clip,
        })
    })
}

/// Noise textures standing in for environmental recordings.
pub fn noise_pool(count: usize, seconds: f64, seed: u64) -> Result<Vec<AudioClip>> {
    let colors = [NoiseColor::White, NoiseColor::Pink, NoiseColor::Brown];
    (0..count)
        .map(|i| {
            let color = colors[i % colors.len()];
            let s = child_seed_index(seed, "noise-pool", i);
            if i % 4 == 3 {
                let n = (seconds * SAMPLE_RATE as f64).round() as usize;
                Ok(AudioClip::new(crowd(n, s)?, SAMPLE_RATE)?.normalized_to_peak(PEAK))
            } else {
                synth_fixture(&FixtureKind::noise(color), seconds, s)
            }
        })
        .collect()
}
