use rand::seq::IndexedRandom;
use rand::Rng;

use super::concept::Concept;
use super::config::{Init, Method, PersonalizationConfig};
use super::loader::{MixSettings, SegmentLoader, TrainLog};
use crate::audio::AudioClip;
use crate::corpus::{fill, IDENTIFIER, NEUTRAL_TEMPLATES};
use crate::diffusion::{
    accumulate_loss_and_grads, sample_latents, GradientSet, ModelState, Optimizer, SampleOptions, Trainable,
    TrainingExample,
};
use crate::error::{Error, Result};
use crate::rng::{child_seed, gaussian_vec, rng_from_seed};
use crate::text::{add_placeholder, PlaceholderInit, UNK_ID};

/// Register the concept's placeholder with the configured initialization.
pub fn register_placeholder(model: &mut ModelState, concept: &Concept, init: Init) -> Result<usize> {
    let init = match init {
        Init::Bl => PlaceholderInit::Baseline,
        Init::Mw => PlaceholderInit::MeanWord(concept.class_noun.clone()),
    };
    add_placeholder(&mut model.table, &mut model.vocab, &concept.placeholder, &init)
}

fn neutral_prompt_ids(model: &ModelState, phrase: &str) -> Vec<Vec<usize>> {
    NEUTRAL_TEMPLATES
        .iter()
        .map(|t| model.tokenize(&fill(t, phrase)))
        .collect()
}

struct Prior {
    latents: Vec<Vec<f64>>,
    ids: Vec<usize>,
    weight: f64,
}

fn run(
    model: &mut ModelState,
    concept: &Concept,
    cfg: &PersonalizationConfig,
    trainable: &Trainable,
    pool: &[AudioClip],
    prior: Option<Prior>,
) -> Result<TrainLog> {
    let phrase = concept.phrase(cfg.method);
    let prompts = neutral_prompt_ids(model, &phrase);
    let mix = cfg.mix.then_some(MixSettings {
        prob: cfg.mix_prob,
        snr_db: cfg.mix_snr_db,
    });
    let mut loader = SegmentLoader::new(&model.codec, concept.first_clips(cfg.n_clips), pool, mix)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer());
    let n = model.n_steps();
    let dim = model.latent_dim();
    let mut grads = GradientSet::zeros(model, trainable);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let z0 = loader.draw(&mut rng)?;
            let ids = prompts.choose(&mut rng).unwrap().clone();
            let t = rng.random_range(1..=n);
            let eps = gaussian_vec(&mut rng, dim);
            batch.push(TrainingExample { z0, ids, t, eps });
        }
        grads.zero();
        let loss = accumulate_loss_and_grads(model, &batch, trainable, 1.0, &mut grads).map_err(|e| e.at_step(step))?;
        if let Some(p) = &prior {
            let prior_batch: Vec<TrainingExample> = (0..cfg.batch)
                .map(|_| TrainingExample {
                    z0: p.latents.choose(&mut rng).unwrap().clone(),
                    ids: p.ids.clone(),
                    t: rng.random_range(1..=n),
                    eps: gaussian_vec(&mut rng, dim),
                })
                .collect();
            accumulate_loss_and_grads(model, &prior_batch, trainable, p.weight, &mut grads)
                .map_err(|e| e.at_step(step))?;
        }
        optimizer.step(model, &grads);
        model.check_finite(step)?;
        losses.push(loss);
    }
    Ok(TrainLog {
        losses,
        draws: loader.into_draws(),
    })
}

/// Textual inversion: optimize only the placeholder row. The placeholder
/// must already be registered (see [`register_placeholder`]).
pub fn train_ti(
    model: &ModelState,
    concept: &Concept,
    cfg: &PersonalizationConfig,
    pool: &[AudioClip],
) -> Result<(ModelState, TrainLog)> {
    cfg.validate()?;
    if cfg.method != Method::Ti {
        return Err(Error::Config(format!("{} is not a textual-inversion config", cfg.name)));
    }
    let id = model
        .vocab
        .id(&concept.placeholder)
        .filter(|&i| model.vocab.is_placeholder(i))
        .ok_or_else(|| Error::Precondition(format!("placeholder {} is not registered", concept.placeholder)))?;
    let mut out = model.clone();
    let log = run(&mut out, concept, cfg, &Trainable::row(id), pool, None)?;
    Ok((out, log))
}

/// DreamBooth: fine-tune the denoiser (and the text encoder when
/// configured) on `identifier class-noun` prompts.
pub fn train_db(
    model: &ModelState,
    concept: &Concept,
    cfg: &PersonalizationConfig,
    pool: &[AudioClip],
) -> Result<(ModelState, TrainLog)> {
    cfg.validate()?;
    if cfg.method != Method::Db {
        return Err(Error::Config(format!("{} is not a DreamBooth config", cfg.name)));
    }
    if model.vocab.id(IDENTIFIER).is_none() {
        return Err(Error::Precondition(format!(
            "identifier {IDENTIFIER:?} is not in the vocabulary"
        )));
    }
    if model.tokenize(&concept.class_noun).iter().all(|&i| i == UNK_ID) {
        return Err(Error::Precondition(format!(
            "class noun {:?} has no known words",
            concept.class_noun
        )));
    }
    let trainable = if cfg.train_text_encoder {
        Trainable::denoiser_and_text()
    } else {
        Trainable::denoiser_only()
    };
    let prior = if cfg.prior_weight > 0.0 {
        let prompt = fill(NEUTRAL_TEMPLATES[0], &concept.class_noun);
        let seed = child_seed(cfg.seed, &["prior"]);
        let latents = sample_latents(model, &prompt, seed, cfg.prior_samples.max(1), SampleOptions::default())?;
        Some(Prior {
            latents: latents.into_iter().map(|l| l.values).collect(),
            ids: model.tokenize(&prompt),
            weight: cfg.prior_weight,
        })
    } else {
        None
    };
    let mut out = model.clone();
    let log = run(&mut out, concept, cfg, &trainable, pool, prior)?;
    Ok((out, log))
}

/// Register (for TI) and train according to `cfg.method`.
pub fn personalize(
    model: &ModelState,
    concept: &Concept,
    cfg: &PersonalizationConfig,
    pool: &[AudioClip],
) -> Result<(ModelState, TrainLog)> {
    match cfg.method {
        Method::Ti => {
            let mut base = model.clone();
            register_placeholder(&mut base, concept, cfg.init)?;
            train_ti(&base, concept, cfg, pool)
        }
        Method::Db => train_db(model, concept, cfg, pool),
    }
}
