//! Audio clips, WAV I/O, SNR-controlled mixing and synthetic fixtures.

mod clip;
mod filter;
mod fixtures;
mod mix;
mod resample;
mod wav;

pub use clip::{rms, AudioClip, SAMPLE_RATE};
pub use filter::{cascade, reverb, Biquad};
pub use fixtures::{beat_onsets, synth_fixture, FixtureKind, NoiseColor, PitchClass, Scale, MAX_BPM, MIN_BPM};
pub use mix::{fit_length, mix_with_snr, mix_with_snr_at, snr_db, Mixture};
pub use resample::resample;
pub use wav::{read_wav, write_wav, write_wav_with, WavEncoding};
