use std::path::Path;

use super::clip::{AudioClip, SAMPLE_RATE};
use super::resample::resample;
use crate::error::{Error, Result};

/// On-disk sample encoding for [`write_wav_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
            ) =>
        {
            Error::io(path, io)
        }
        // Short reads inside the header surface as plain I/O errors.
        hound::Error::IoError(io) => Error::Format(format!("{}: {io}", path.display())),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported | hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            Error::Unsupported(format!("{}: {e}", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Read a 16-bit integer or 32-bit float WAV file, downmix to mono and
/// resample to 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::Unsupported(format!(
            "{}: {channels} channels (mono or stereo only)",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let samples = resample(&mono, spec.sample_rate, SAMPLE_RATE);
    AudioClip::new(samples, SAMPLE_RATE).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Write a clip as 16-bit PCM.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    write_wav_with(clip, path, WavEncoding::Pcm16)
}

pub fn write_wav_with(clip: &AudioClip, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in clip.samples() {
        let res = match encoding {
            WavEncoding::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)
            }
            WavEncoding::Float32 => writer.write_sample(s as f32),
        };
        res.map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn silence_roundtrips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let clip = AudioClip::silence(1.0, SAMPLE_RATE);
        write_wav(&clip, &p).unwrap();
        assert_eq!(read_wav(&p).unwrap(), clip);
    }

    #[test]
    fn sine_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sine.wav");
        let s: Vec<f64> = (0..16_000)
            .map(|n| 0.8 * (2.0 * PI * 440.0 * n as f64 / 16_000.0).sin())
            .collect();
        let clip = AudioClip::new(s, SAMPLE_RATE).unwrap();
        write_wav(&clip, &p).unwrap();
        let back = read_wav(&p).unwrap();
        let max_err = clip
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "{max_err}");
    }

    #[test]
    fn float_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let clip = AudioClip::new(vec![0.25, -0.5, 0.125], SAMPLE_RATE).unwrap();
        write_wav_with(&clip, &p, WavEncoding::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), clip);
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(16384i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let c = read_wav(&p).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.samples().iter().all(|&s| (s - 0.25).abs() < 1e-12));
    }

    #[test]
    fn malformed_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk").unwrap();
        let r = read_wav(&p);
        assert!(matches!(r, Err(Error::Format(_))), "{r:?}");
    }

    #[test]
    fn eight_bit_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u8.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Unsupported(_))));
    }
}
