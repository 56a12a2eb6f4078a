//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by `--set key.path=value` flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use tunelab::corpus::CorpusConfig;
use tunelab::diffusion::SampleOptions;
use tunelab::harness::StackConfig;
use tunelab::metrics::{ContrastiveConfig, KeyProfile};
use tunelab::personalization::{OptimizerKind, PersonalizationConfig, PretrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Use the data-parallel code paths (when the build has them).
    pub parallel: bool,
    pub corpus: CorpusConfig,
    pub pretrain: PretrainConfig,
    pub contrastive: ContrastiveConfig,
    pub personalize: PersonalizeSection,
    pub sample: SampleSection,
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            parallel: true,
            corpus: CorpusConfig::default(),
            pretrain: PretrainConfig::default(),
            contrastive: ContrastiveConfig::default(),
            personalize: PersonalizeSection::default(),
            sample: SampleSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonalizeSection {
    /// Named configuration, e.g. `TI-BL` or `DB-TE`.
    pub config: String,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub optimizer: Option<OptimizerKind>,
    pub noise_pool_clips: usize,
}

impl Default for PersonalizeSection {
    fn default() -> Self {
        Self {
            config: "TI-BL".into(),
            lr: None,
            steps: None,
            batch: None,
            optimizer: None,
            noise_pool_clips: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// One-second segments per generated clip.
    pub segments: usize,
    pub stochastic: bool,
    pub guidance: Option<f64>,
}

impl Default for SampleSection {
    fn default() -> Self {
        let o = SampleOptions::default();
        Self {
            segments: 4,
            stochastic: o.stochastic,
            guidance: o.guidance,
        }
    }
}

impl SampleSection {
    pub fn options(&self) -> SampleOptions {
        SampleOptions {
            stochastic: self.stochastic,
            guidance: self.guidance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub configs: Vec<String>,
    pub include_base: bool,
    pub concepts: Option<Vec<String>>,
    pub max_prompts: Option<usize>,
    pub clips_per_prompt: usize,
    pub key_profile: KeyProfile,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            configs: PersonalizationConfig::all_named().into_iter().map(|c| c.name).collect(),
            include_base: true,
            concepts: None,
            max_prompts: None,
            clips_per_prompt: tunelab::harness::CLIPS_PER_PROMPT,
            key_profile: KeyProfile::default(),
        }
    }
}

impl RunConfig {
    pub fn stack(&self) -> StackConfig {
        StackConfig {
            corpus: self.corpus.clone(),
            pretrain: self.pretrain.clone(),
            contrastive: self.contrastive.clone(),
        }
    }

    /// The personalization config named in `[personalize]`, with its
    /// overrides applied.
    pub fn personalization(&self, name: Option<&str>) -> Result<PersonalizationConfig> {
        let p = &self.personalize;
        let mut cfg = PersonalizationConfig::named(name.unwrap_or(&p.config))?;
        if let Some(lr) = p.lr {
            cfg.lr = lr;
        }
        if let Some(steps) = p.steps {
            cfg.steps = steps;
        }
        if let Some(batch) = p.batch {
            cfg.batch = batch;
        }
        if let Some(opt) = p.optimizer {
            cfg.optimizer = opt;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment_configs(&self) -> Result<Vec<PersonalizationConfig>> {
        self.experiment
            .configs
            .iter()
            .map(|n| self.personalization(Some(n)))
            .collect()
    }
}

/// Parse a `key.path=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("override {s:?} is not of the form key.path=value"))?;
    let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        bail!("override {s:?} has an empty key segment");
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("{} is not a table", path.join(".")))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

/// Keys present in `given` but absent from `known`.
fn unknown_keys(given: &Table, known: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, known.get(k)) {
            (_, None) => out.push(key),
            (Value::Table(g), Some(Value::Table(kn))) => unknown_keys(g, kn, &key, out),
            _ => {}
        }
    }
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = Value::try_from(RunConfig::default())
        .context("serializing defaults")?
        .as_table()
        .cloned()
        .expect("config is a table");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut table, file);
    }
    for o in overrides {
        let (p, v) = parse_override(o)?;
        set_path(&mut table, &p, v)?;
    }
    let cfg: RunConfig = Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid configuration: {}", e.message()))?;
    let known = Value::try_from(&cfg).context("serializing config")?;
    let mut unknown = Vec::new();
    unknown_keys(&table, known.as_table().expect("config is a table"), "", &mut unknown);
    if !unknown.is_empty() {
        bail!("unknown configuration keys: {}", unknown.join(", "));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_strings() {
        let (p, v) = parse_override("pretrain.steps=10").unwrap();
        assert_eq!(p, ["pretrain", "steps"]);
        assert_eq!(v, Value::Integer(10));
        let (_, v) = parse_override("personalize.config=DB-TE").unwrap();
        assert_eq!(v, Value::String("DB-TE".into()));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn defaults_load_and_overrides_apply() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = load_config(None, &["pretrain.steps=12".into(), "sample.guidance=2.0".into()]).unwrap();
        assert_eq!(cfg.pretrain.steps, 12);
        assert_eq!(cfg.sample.guidance, Some(2.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load_config(None, &["pretrain.stepz=1".into()]).unwrap_err();
        assert!(err.to_string().contains("pretrain.stepz"), "{err}");
        assert!(load_config(None, &["bogus=1".into()]).is_err());
    }

    #[test]
    fn personalization_overrides() {
        let cfg = load_config(
            None,
            &["personalize.lr=0.5".into(), "personalize.optimizer=adam".into()],
        )
        .unwrap();
        let p = cfg.personalization(Some("TI-MW")).unwrap();
        assert_eq!(p.lr, 0.5);
        assert_eq!(p.optimizer, OptimizerKind::Adam);
        assert!(cfg.personalization(Some("XX-BL")).is_err());
    }
}
