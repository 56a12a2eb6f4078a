use serde::{Deserialize, Serialize};

use crate::diffusion::OptimizerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Textual inversion.
    Ti,
    /// DreamBooth.
    Db,
}

/// Initialization of the textual-inversion embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Mean of every base word embedding.
    Bl,
    /// Mean of the class-noun word embeddings.
    Mw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonalizationConfig {
    pub name: String,
    pub method: Method,
    pub n_clips: usize,
    pub mix: bool,
    pub init: Init,
    pub train_text_encoder: bool,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// SGD momentum; 0 is plain SGD. Ignored by Adam.
    pub momentum: f64,
    /// Probability that a drawn segment is mixed with noise when `mix` is on.
    pub mix_prob: f64,
    pub mix_snr_db: f64,
    /// Weight of the prior-preservation term (DreamBooth only); 0 is off.
    pub prior_weight: f64,
    /// Class-prompted samples generated for prior preservation.
    pub prior_samples: usize,
}

impl Default for PersonalizationConfig {
    fn default() -> Self {
        Self::ti()
    }
}

impl PersonalizationConfig {
    pub fn ti() -> Self {
        Self {
            name: "TI-BL".into(),
            method: Method::Ti,
            n_clips: 5,
            mix: false,
            init: Init::Bl,
            train_text_encoder: false,
            lr: 2e-2,
            steps: 150,
            batch: 4,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.0,
            mix_prob: 0.5,
            mix_snr_db: 20.0,
            prior_weight: 0.0,
            prior_samples: 8,
        }
    }

    pub fn db() -> Self {
        Self {
            name: "DB-BL".into(),
            method: Method::Db,
            lr: 4e-6,
            steps: 1500,
            ..Self::ti()
        }
    }

    /// The named training configurations: `TI-BL`, `TI-1AC`, `TI-3AC`,
    /// `TI-MW`, `TI-MIX`, `DB-BL`, `DB-1AC`, `DB-3AC`, `DB-TE`, `DB-MIX`.
    pub fn named(name: &str) -> Result<Self> {
        let upper = name.to_uppercase();
        let (method, variant) = upper
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("unknown config {name:?}")))?;
        let mut cfg = match method {
            "TI" => Self::ti(),
            "DB" => Self::db(),
            _ => return Err(Error::Config(format!("unknown method in {name:?}"))),
        };
        match (cfg.method, variant) {
            (_, "BL") => {}
            (_, "1AC") => cfg.n_clips = 1,
            (_, "3AC") => cfg.n_clips = 3,
            (_, "MIX") => cfg.mix = true,
            (Method::Ti, "MW") => cfg.init = Init::Mw,
            (Method::Db, "TE") => cfg.train_text_encoder = true,
            _ => return Err(Error::Config(format!("unknown config {name:?}"))),
        }
        cfg.name = upper;
        Ok(cfg)
    }

    pub fn all_named() -> Vec<Self> {
        [
            "DB-BL", "DB-1AC", "DB-3AC", "DB-TE", "DB-MIX", "TI-BL", "TI-1AC", "TI-3AC", "TI-MW", "TI-MIX",
        ]
        .iter()
        .map(|n| Self::named(n).expect("built-in config"))
        .collect()
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::Sgd {
                lr: self.lr,
                momentum: self.momentum,
            },
            OptimizerKind::Adam => OptimizerConfig::adam(self.lr),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips == 0 {
            return Err(Error::Config("n_clips must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.mix_prob) {
            return Err(Error::Config("mix_prob must be in [0, 1]".into()));
        }
        if self.method == Method::Ti && self.train_text_encoder {
            return Err(Error::Config("train_text_encoder applies to DreamBooth only".into()));
        }
        if self.method == Method::Ti && self.prior_weight != 0.0 {
            return Err(Error::Config("prior preservation applies to DreamBooth only".into()));
        }
        if self.prior_weight < 0.0 {
            return Err(Error::Config("prior_weight must be non-negative".into()));
        }
        Ok(())
    }
}
