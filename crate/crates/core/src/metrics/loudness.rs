use crate::audio::{cascade, resample, AudioClip, Biquad};
use crate::error::{Error, Result};

pub const LOUDNESS_TOLERANCE: f64 = 2.5;
const ABSOLUTE_GATE: f64 = -70.0;
const RELATIVE_GATE: f64 = -10.0;
const BLOCK_S: f64 = 0.4;
const STEP_S: f64 = 0.1;
/// Rate the filter recipe is specified at; other rates are resampled to it.
pub const REFERENCE_RATE: u32 = 48000;

/// The two K-weighting stages designed for `sr` from the analog prototype
/// parameters; at 48 kHz these reproduce the published coefficients.
pub fn k_weighting(sr: f64) -> [Biquad; 2] {
    // Stage 1: high shelf.
    let (g, q, fc) = (3.999_843_853_973_347, 0.707_175_236_955_419_3, 1_681.974_450_955_531_9);
    let k = (std::f64::consts::PI * fc / sr).tan();
    let vh = 10f64.powf(g / 20.0);
    let vb = vh.powf(0.499_666_774_154_541_6);
    let a0 = 1.0 + k / q + k * k;
    let shelf = Biquad::new(
        [
            (vh + vb * k / q + k * k) / a0,
            2.0 * (k * k - vh) / a0,
            (vh - vb * k / q + k * k) / a0,
        ],
        [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
    );
    // Stage 2: high pass.
    let (q, fc) = (0.500_327_037_325_395_3, 38.135_470_876_139_82);
    let k = (std::f64::consts::PI * fc / sr).tan();
    let a0 = 1.0 + k / q + k * k;
    let hp = Biquad::new([1.0, -2.0, 1.0], [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0]);
    [shelf, hp]
}

fn block_loudness(z: f64) -> f64 {
    -0.691 + 10.0 * z.log10()
}

/// Gated integrated loudness in LUFS. `Ok(None)` when every block is
/// gated (silence).
pub fn integrated_loudness(clip: &AudioClip) -> Result<Option<f64>> {
    if clip.duration() < BLOCK_S - 1e-9 {
        return Err(Error::domain(format!(
            "loudness needs at least {BLOCK_S} s, got {:.3} s",
            clip.duration()
        )));
    }
    // The prewarped design still bends the shelf near Nyquist at low rates,
    // so filter at the reference rate.
    let x = resample(clip.samples(), clip.sample_rate(), REFERENCE_RATE);
    let sr = REFERENCE_RATE as f64;
    let block = (BLOCK_S * sr).round() as usize;
    let step = (STEP_S * sr).round() as usize;
    if x.len() < block {
        return Err(Error::domain("clip too short after resampling"));
    }
    let y = cascade(&k_weighting(sr), &x);
    let mut prefix = vec![0.0; y.len() + 1];
    for (i, v) in y.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let n_blocks = (y.len() - block) / step + 1;
    let z: Vec<f64> = (0..n_blocks)
        .map(|j| (prefix[j * step + block] - prefix[j * step]) / block as f64)
        .collect();
    let above_abs: Vec<f64> = z
        .iter()
        .copied()
        .filter(|&zj| zj > 0.0 && block_loudness(zj) > ABSOLUTE_GATE)
        .collect();
    if above_abs.is_empty() {
        return Ok(None);
    }
    let rel = block_loudness(above_abs.iter().sum::<f64>() / above_abs.len() as f64) + RELATIVE_GATE;
    let gated: Vec<f64> = above_abs.into_iter().filter(|&zj| block_loudness(zj) > rel).collect();
    if gated.is_empty() {
        return Ok(None);
    }
    Ok(Some(block_loudness(gated.iter().sum::<f64>() / gated.len() as f64)))
}

/// `|gen − ref_mean| ≤ 2.5` LU, boundary inclusive.
pub fn loudness_match(gen_lufs: f64, ref_mean_lufs: f64) -> bool {
    (gen_lufs - ref_mean_lufs).abs() <= LOUDNESS_TOLERANCE
}
