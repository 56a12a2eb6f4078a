use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::codec::{Codec, NormStats};
use crate::corpus::base_vocabulary;
use crate::diffusion::{
    accumulate_loss_and_grads, ldm_loss, GradientSet, ModelConfig, ModelState, Optimizer, OptimizerConfig, Trainable,
    TrainingExample,
};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{child_seed, gaussian_vec, rng_from_seed};
use crate::text::Vocab;

/// Minimum number of distinct captions a pretraining corpus must carry.
pub const MIN_PRETRAIN_LABELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch: usize,
    /// Peak Adam learning rate, cosine-decayed to zero.
    pub lr: f64,
    /// Probability of replacing a caption with the null conditioning.
    pub cond_dropout: f64,
    pub eval_fraction: f64,
    pub eval_every: usize,
    /// Floor on per-dimension standard deviations of the latent
    /// standardization, in dB.
    pub min_std_db: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            steps: 3000,
            batch: 64,
            lr: 2e-3,
            cond_dropout: 0.1,
            eval_fraction: 0.1,
            eval_every: 100,
            min_std_db: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub train_losses: Vec<f64>,
    /// `(step, eval loss)`; step 0 is before any update.
    pub eval_losses: Vec<(usize, f64)>,
}

impl PretrainLog {
    pub fn initial_eval(&self) -> Option<f64> {
        self.eval_losses.first().map(|e| e.1)
    }

    pub fn final_eval(&self) -> Option<f64> {
        self.eval_losses.last().map(|e| e.1)
    }
}

/// Exponential moving average with span `window` (α = 2/(window+1)).
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let alpha = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = None;
    for &v in values {
        let next = match acc {
            None => v,
            Some(a) => alpha * v + (1.0 - alpha) * a,
        };
        acc = Some(next);
        out.push(next);
    }
    out
}

/// Vocabulary of the shipped world plus every caption word and any extra
/// words (such as manifest class nouns).
pub fn corpus_vocabulary<S: AsRef<str>>(labels: &[S], extra: &[S]) -> Vocab {
    let base = base_vocabulary(extra);
    let words = base.tokens()[1..]
        .iter()
        .cloned()
        .chain(labels.iter().map(|l| l.as_ref().to_string()));
    Vocab::from_words(words)
}

/// Train denoiser, text encoder and embeddings jointly on captioned clips.
pub fn pretrain(
    corpus: &[(String, AudioClip)],
    extra_words: &[String],
    cfg: &PretrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<(ModelState, PretrainLog)> {
    let distinct: BTreeSet<&str> = corpus.iter().map(|(l, _)| l.as_str()).collect();
    if distinct.len() < MIN_PRETRAIN_LABELS {
        return Err(Error::Precondition(format!(
            "pretraining needs at least {MIN_PRETRAIN_LABELS} distinct captions, got {}",
            distinct.len()
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let raw_codec = Codec::unnormalized(cfg.model.codec.clone())?;
    let seg_len = cfg.model.codec.segment_len;
    // Raw patches per (clip, segment).
    let patches: Vec<Vec<Vec<f64>>> = par::try_map(exec, corpus, |(_, clip)| {
        let n = clip.len() / seg_len;
        if n == 0 {
            return Err(Error::domain("corpus clip shorter than one segment"));
        }
        (0..n)
            .map(|i| raw_codec.raw_patch(&clip.samples()[i * seg_len..(i + 1) * seg_len]))
            .collect::<Result<Vec<_>>>()
    })?;
    let flat: Vec<Vec<f64>> = patches.iter().flatten().cloned().collect();
    let norm = NormStats::fit(&flat, cfg.min_std_db)?;

    let labels: Vec<&str> = corpus.iter().map(|(l, _)| l.as_str()).collect();
    let extra: Vec<&str> = extra_words.iter().map(String::as_str).collect();
    let vocab = corpus_vocabulary(&labels, &extra);
    let mut model = ModelState::init(cfg.model.clone(), vocab, norm, child_seed(seed, &["init"]))?;

    let mut items: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for ((label, _), clip_patches) in corpus.iter().zip(&patches) {
        let ids = model.tokenize(label);
        for p in clip_patches {
            items.push((model.codec.norm().standardize(p), ids.clone()));
        }
    }
    let stride = if cfg.eval_fraction > 0.0 {
        (1.0 / cfg.eval_fraction).round().max(2.0) as usize
    } else {
        usize::MAX
    };
    let (mut train, mut eval_items) = (Vec::new(), Vec::new());
    for (i, item) in items.into_iter().enumerate() {
        if stride != usize::MAX && i % stride == stride - 1 {
            eval_items.push(item);
        } else {
            train.push(item);
        }
    }
    if train.is_empty() {
        return Err(Error::DegenerateInput("no training segments".into()));
    }
    let n = model.n_steps();
    let dim = model.latent_dim();
    let mut eval_rng = rng_from_seed(child_seed(seed, &["eval"]));
    let eval_set: Vec<TrainingExample> = eval_items
        .iter()
        .map(|(z0, ids)| TrainingExample {
            z0: z0.clone(),
            ids: ids.clone(),
            t: eval_rng.random_range(1..=n),
            eps: gaussian_vec(&mut eval_rng, dim),
        })
        .collect();
    let eval_loss = |m: &ModelState| -> Result<f64> {
        let mut total = 0.0;
        for chunk in eval_set.chunks(256) {
            total += ldm_loss(m, chunk)? * chunk.len() as f64;
        }
        Ok(total / eval_set.len() as f64)
    };

    let mut log = PretrainLog::default();
    if !eval_set.is_empty() {
        log.eval_losses.push((0, eval_loss(&model)?));
    }
    let trainable = Trainable::all(&model);
    let mut optimizer = Optimizer::new(OptimizerConfig::adam(cfg.lr));
    let mut grads = GradientSet::zeros(&model, &trainable);
    let mut rng = rng_from_seed(child_seed(seed, &["train"]));
    for step in 0..cfg.steps {
        let batch: Vec<TrainingExample> = (0..cfg.batch)
            .map(|_| {
                let (z0, ids) = &train[rng.random_range(0..train.len())];
                let ids = if rng.random_bool(cfg.cond_dropout) {
                    Vec::new()
                } else {
                    ids.clone()
                };
                TrainingExample {
                    z0: z0.clone(),
                    ids,
                    t: rng.random_range(1..=n),
                    eps: gaussian_vec(&mut rng, dim),
                }
            })
            .collect();
        grads.zero();
        let loss =
            accumulate_loss_and_grads(&model, &batch, &trainable, 1.0, &mut grads).map_err(|e| e.at_step(step))?;
        optimizer.set_lr(cfg.lr * 0.5 * (1.0 + (PI * step as f64 / cfg.steps as f64).cos()));
        optimizer.step(&mut model, &grads);
        model.check_finite(step)?;
        log.train_losses.push(loss);
        let done = step + 1;
        if !eval_set.is_empty() && (done % cfg.eval_every.max(1) == 0 || done == cfg.steps) {
            log.eval_losses.push((done, eval_loss(&model)?));
        }
    }
    Ok((model, log))
}
