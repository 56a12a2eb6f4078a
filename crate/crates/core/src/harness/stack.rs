//! The pretrained stack: the diffusion model and the contrastive text tower,
//! both trained on one rendered corpus and stored in a single checkpoint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::corpus::{pretraining_corpus, CorpusConfig};
use crate::diffusion::{load_checkpoint, save_checkpoint, ModelState};
use crate::error::{Error, Result};
use crate::metrics::{ContrastiveConfig, ContrastiveHead, ContrastiveLog, Embedder};
use crate::par::Exec;
use crate::personalization::{pretrain, PretrainConfig, PretrainLog};
use crate::rng::child_seed;

const TEXT_TOWER_KEY: &str = "text_tower";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub corpus: CorpusConfig,
    pub pretrain: PretrainConfig,
    pub contrastive: ContrastiveConfig,
}

#[derive(Debug, Clone)]
pub struct PretrainedStack {
    pub model: ModelState,
    pub text_tower: ContrastiveHead,
    pub pretrain_log: PretrainLog,
    pub contrastive_log: ContrastiveLog,
}

impl PretrainedStack {
    pub fn text_embedder(&self) -> Embedder {
        Embedder::Contrastive(Box::new(self.text_tower.clone()))
    }
}

/// Render the corpus and train both networks. Child seeds: `corpus`,
/// `pretrain` and `contrastive` under `seed`.
pub fn build_stack(cfg: &StackConfig, seed: u64, exec: Exec) -> Result<PretrainedStack> {
    let corpus = pretraining_corpus(&cfg.corpus, child_seed(seed, &["corpus"]), exec)?;
    let pairs: Vec<(String, AudioClip)> = corpus.into_iter().map(|c| (c.label, c.clip)).collect();
    log::info!("pretraining on {} captioned clips", pairs.len());
    let (model, pretrain_log) = pretrain(&pairs, &[], &cfg.pretrain, child_seed(seed, &["pretrain"]), exec)?;
    log::info!("training the contrastive text tower");
    let (text_tower, contrastive_log) =
        ContrastiveHead::train(&pairs, &cfg.contrastive, child_seed(seed, &["contrastive"]), exec)?;
    Ok(PretrainedStack {
        model,
        text_tower,
        pretrain_log,
        contrastive_log,
    })
}

/// Save a model; a text tower, when given, rides in the checkpoint's
/// metadata next to `extra`'s fields.
pub fn save_model(
    model: &ModelState,
    text_tower: Option<&ContrastiveHead>,
    extra: serde_json::Value,
    path: &Path,
) -> Result<()> {
    let mut meta = match extra {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("extra".into(), other);
            m
        }
    };
    if let Some(t) = text_tower {
        meta.insert(
            TEXT_TOWER_KEY.into(),
            serde_json::to_value(t).expect("text tower serializes"),
        );
    }
    save_checkpoint(model, serde_json::Value::Object(meta), path)
}

pub fn save_stack(stack: &PretrainedStack, extra: serde_json::Value, path: &Path) -> Result<()> {
    save_model(&stack.model, Some(&stack.text_tower), extra, path)
}

/// A loaded checkpoint: the model, its text tower if stored, and the rest of
/// the metadata.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ModelState,
    pub text_tower: Option<ContrastiveHead>,
    pub meta: serde_json::Value,
}

impl LoadedModel {
    pub fn text_embedder(&self) -> Option<Embedder> {
        self.text_tower.clone().map(|t| Embedder::Contrastive(Box::new(t)))
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let (model, mut meta) = load_checkpoint(path)?;
    let text_tower = match meta.as_object_mut().and_then(|m| m.remove(TEXT_TOWER_KEY)) {
        Some(v) => Some(ContrastiveHead::from_json(v).map_err(|detail| Error::Load {
            path: path.to_path_buf(),
            field: TEXT_TOWER_KEY.into(),
            detail,
        })?),
        None => None,
    };
    Ok(LoadedModel {
        model,
        text_tower,
        meta,
    })
}
