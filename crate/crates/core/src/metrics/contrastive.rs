//! A small audio/caption embedding pair trained with InfoNCE.
//!
//! Audio tower: standardized clip descriptors through one linear map.
//! Text tower: mean of learned word vectors. Both outputs are unit
//! normalized; logits are cosines over a temperature.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::embed::unit_normalize;
use super::features::{FeatureExtractor, FEATURE_DIM};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{gaussian_vec, rng_from_seed};
use crate::text::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub dim: usize,
    pub steps: usize,
    pub lr: f64,
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            steps: 400,
            lr: 0.02,
            temperature: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastiveHead {
    dim: usize,
    sample_rate: u32,
    vocab: Vocab,
    /// `dim × FEATURE_DIM`, row-major.
    audio_weights: Vec<f64>,
    /// `vocab.len() × dim`, row-major.
    word_vectors: Vec<f64>,
    #[serde(skip)]
    features: Option<FeatureExtractor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveLog {
    pub losses: Vec<f64>,
    /// Fraction of clips whose own caption scores highest after training.
    pub train_top1: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Rows of `u` normalized; returns the normalized rows and the norms.
fn normalize_rows(u: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = u.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-12));
    let out = u / &norms.view().insert_axis(Axis(1));
    (out, norms)
}

/// Backprop through row normalization: `(g − a (a·g)) / |u|`.
fn normalize_rows_backward(a: &Array2<f64>, norms: &Array1<f64>, g: &Array2<f64>) -> Array2<f64> {
    let dots = (a * g).sum_axis(Axis(1));
    (g - &(a * &dots.view().insert_axis(Axis(1)))) / &norms.view().insert_axis(Axis(1))
}

impl ContrastiveHead {
    /// Train on `(caption, clip)` pairs. Identical captions share a class.
    pub fn train(
        pairs: &[(String, AudioClip)],
        cfg: &ContrastiveConfig,
        seed: u64,
        exec: Exec,
    ) -> Result<(Self, ContrastiveLog)> {
        if pairs.len() < 2 {
            return Err(Error::domain("contrastive training needs at least two pairs"));
        }
        if cfg.dim == 0 || cfg.temperature <= 0.0 || cfg.lr <= 0.0 {
            return Err(Error::Config(format!("invalid contrastive config {cfg:?}")));
        }
        let sr = pairs[0].1.sample_rate();
        let fx = FeatureExtractor::new(sr);
        let feats = par::try_map(exec, pairs, |(_, c)| fx.features(c))?;
        let n = pairs.len();
        let f = Array2::from_shape_vec((n, FEATURE_DIM), feats.concat()).expect("feature shape");

        let mut captions: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
        captions.sort_unstable();
        captions.dedup();
        let targets: Vec<usize> = pairs
            .iter()
            .map(|p| captions.binary_search(&p.0.as_str()).unwrap())
            .collect();
        let vocab = Vocab::from_words(captions.iter());
        let caption_ids: Vec<Vec<usize>> = captions.iter().map(|c| vocab.tokenize(c)).collect();
        if caption_ids.iter().any(Vec::is_empty) {
            return Err(Error::domain("a caption has no words"));
        }

        let d = cfg.dim;
        let mut rng = rng_from_seed(seed);
        let wa_scale = 1.0 / (FEATURE_DIM as f64).sqrt();
        let mut wa: Vec<f64> = gaussian_vec(&mut rng, d * FEATURE_DIM)
            .iter()
            .map(|x| x * wa_scale)
            .collect();
        let mut we: Vec<f64> = gaussian_vec(&mut rng, vocab.len() * d)
            .iter()
            .map(|x| x / (d as f64).sqrt())
            .collect();
        let mut opt_a = Adam::new(wa.len());
        let mut opt_e = Adam::new(we.len());
        let inv_t = 1.0 / cfg.temperature;
        let c = captions.len();
        let mut losses = Vec::with_capacity(cfg.steps);

        for step in 0..cfg.steps {
            let w = Array2::from_shape_vec((d, FEATURE_DIM), wa.clone()).unwrap();
            let table = Array2::from_shape_vec((vocab.len(), d), we.clone()).unwrap();
            let u = f.dot(&w.t());
            let (a, a_norm) = normalize_rows(&u);
            let mut v = Array2::zeros((c, d));
            for (j, ids) in caption_ids.iter().enumerate() {
                for &id in ids {
                    v.row_mut(j).scaled_add(1.0 / ids.len() as f64, &table.row(id));
                }
            }
            let (t, t_norm) = normalize_rows(&v);
            let s = a.dot(&t.t()) * inv_t;
            let mut g = Array2::zeros((n, c));
            let mut loss = 0.0;
            for i in 0..n {
                let row = s.row(i);
                let mx = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let z: f64 = row.iter().map(|x| (x - mx).exp()).sum();
                loss += mx + z.ln() - row[targets[i]];
                for j in 0..c {
                    g[[i, j]] = (row[j] - mx).exp() / z / n as f64;
                }
                g[[i, targets[i]]] -= 1.0 / n as f64;
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    step,
                    detail: "contrastive loss is not finite".into(),
                });
            }
            losses.push(loss);
            let ga = g.dot(&t) * inv_t;
            let gt = g.t().dot(&a) * inv_t;
            let gu = normalize_rows_backward(&a, &a_norm, &ga);
            let gv = normalize_rows_backward(&t, &t_norm, &gt);
            let gw = gu.t().dot(&f);
            let mut gtable = Array2::<f64>::zeros((vocab.len(), d));
            for (j, ids) in caption_ids.iter().enumerate() {
                for &id in ids {
                    gtable.row_mut(id).scaled_add(1.0 / ids.len() as f64, &gv.row(j));
                }
            }
            opt_a.step(&mut wa, gw.as_slice().unwrap(), cfg.lr);
            opt_e.step(&mut we, gtable.as_slice().unwrap(), cfg.lr);
        }

        let head = Self {
            dim: d,
            sample_rate: sr,
            vocab,
            audio_weights: wa,
            word_vectors: we,
            features: Some(fx),
        };
        let text: Vec<Vec<f64>> = captions.iter().map(|cap| head.embed_text(cap)).collect::<Result<_>>()?;
        let mut hits = 0;
        for (i, fi) in feats.iter().enumerate() {
            let a = head.project(fi)?;
            let best = (0..c)
                .max_by(|&x, &y| dot(&a, &text[x]).total_cmp(&dot(&a, &text[y])))
                .unwrap();
            hits += usize::from(best == targets[i]);
        }
        let log = ContrastiveLog {
            losses,
            train_top1: hits as f64 / n as f64,
        };
        Ok((head, log))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, feats: &[f64]) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self
            .audio_weights
            .chunks(FEATURE_DIM)
            .map(|row| dot(row, feats))
            .collect();
        unit_normalize(&mut out)?;
        Ok(out)
    }

    pub fn embed_audio(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        let feats = match &self.features {
            Some(fx) => fx.features(clip)?,
            None => FeatureExtractor::new(self.sample_rate).features(clip)?,
        };
        self.project(&feats)
    }

    /// Mean word vector of the known words in `prompt`, unit normalized.
    /// Unknown words are skipped; a prompt with no known word is an error.
    pub fn embed_text(&self, prompt: &str) -> Result<Vec<f64>> {
        let ids: Vec<usize> = self
            .vocab
            .tokenize(prompt)
            .into_iter()
            .filter(|&id| id != crate::text::UNK_ID)
            .collect();
        if ids.is_empty() {
            return Err(Error::domain(format!("no known words in prompt {prompt:?}")));
        }
        let mut out = vec![0.0; self.dim];
        for id in &ids {
            let row = &self.word_vectors[id * self.dim..(id + 1) * self.dim];
            for (o, r) in out.iter_mut().zip(row) {
                *o += r / ids.len() as f64;
            }
        }
        unit_normalize(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            field: "contrastive head".into(),
            detail: e.to_string(),
        })?;
        Self::from_json(value).map_err(|detail| Error::Load {
            path: path.to_path_buf(),
            field: "contrastive head".into(),
            detail,
        })
    }

    /// Rebuild a head from its serialized form, checking tensor sizes.
    pub fn from_json(value: serde_json::Value) -> std::result::Result<Self, String> {
        let mut head: Self = serde_json::from_value(value).map_err(|e| e.to_string())?;
        if head.audio_weights.len() != head.dim * FEATURE_DIM || head.word_vectors.len() != head.vocab.len() * head.dim
        {
            return Err("tensor sizes do not match dim and vocabulary".into());
        }
        head.features = Some(FeatureExtractor::new(head.sample_rate));
        Ok(head)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
