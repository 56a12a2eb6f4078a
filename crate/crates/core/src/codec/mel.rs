//! HTK-style triangular mel filterbank and its non-negative inverse.

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    /// Row-major `[n_mels × n_bins]`.
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    /// `n_mels` triangles spaced evenly in mel between 0 Hz and Nyquist.
    pub fn new(n_mels: usize, window_len: usize, sample_rate: u32) -> Self {
        let n_bins = window_len / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / window_len as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        Self {
            n_mels,
            n_bins,
            weights,
            centers_hz: edges_hz[1..=n_mels].to_vec(),
            edges_hz,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Lower and upper edge of band `m`.
    pub fn band_hz(&self, m: usize) -> (f64, f64) {
        (self.edges_hz[m], self.edges_hz[m + 2])
    }

    pub fn weight(&self, m: usize, bin: usize) -> f64 {
        self.weights[m * self.n_bins + bin]
    }

    fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Non-negative least-squares estimate of a linear power spectrum whose
    /// mel projection matches `mel`, by multiplicative updates.
    pub fn invert(&self, mel: &[f64], iterations: usize) -> Vec<f64> {
        let ft_m = self.transpose_apply(mel);
        let col_sum = self.transpose_apply(&vec![1.0; self.n_mels]);
        let mut p: Vec<f64> = ft_m
            .iter()
            .zip(&col_sum)
            .map(|(a, c)| if *c > 0.0 { a / c } else { 0.0 })
            .collect();
        for _ in 0..iterations {
            let fp = self.apply(&p);
            let ftfp = self.transpose_apply(&fp);
            for ((pk, num), den) in p.iter_mut().zip(&ft_m).zip(&ftfp) {
                if *den > 0.0 {
                    *pk *= num / den;
                }
            }
        }
        p
    }

    fn transpose_apply(&self, mel: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for (m, &v) in mel.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(m)) {
                *o += w * v;
            }
        }
        out
    }
}
