//! Pretraining and the two personalization trainers.

mod concept;
mod config;
mod loader;
mod pretrain;
mod train;

pub use concept::Concept;
pub use config::{Init, Method, OptimizerKind, PersonalizationConfig};
pub use loader::{apply_mix, MixRecord, MixSettings, SegmentDraw, SegmentLoader, TrainLog};
pub use pretrain::{corpus_vocabulary, pretrain, smooth, PretrainConfig, PretrainLog, MIN_PRETRAIN_LABELS};
pub use train::{personalize, register_placeholder, train_db, train_ti};
