//! Dataset manifests: the concepts to personalize on and the editability
//! prompts to probe them with.
//!
//! A manifest is a TOML file:
//!
//! ```toml
//! name = "synthetic-16"
//! seed = 2024                # fixture rendering seed
//! clip_seconds = 4.0         # length of rendered fixture clips
//! clips_per_concept = 5      # fixture clips per concept (1..=5)
//! prompts_file = "editability_prompts.txt"   # or: editability_prompts = ["a {} with drums", ...]
//!
//! [[concepts]]
//! name = "Tabla"
//! class_noun = "tom drum"
//! category = "percussion"    # percussion | melodic | multi-instrument
//! held_out = true            # optional, default false
//! layers = [{ kind = "click_track", bpm = 96, click_hz = 200 }]
//! # or: clips = ["tabla/1.wav", "tabla/2.wav"]   (relative to the manifest)
//! ```
//!
//! Prompt files hold one template per line; blank lines and lines starting
//! with `#` are skipped. Every template has exactly one `{}` slot.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioClip};
use crate::corpus::{render_layers, Category, Layer};
use crate::error::{Error, Result};
use crate::personalization::Concept;
use crate::rng::child_seed;

pub const MAX_CLIPS_PER_CONCEPT: usize = 5;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_clip_seconds")]
    clip_seconds: f64,
    #[serde(default = "default_clips_per_concept")]
    clips_per_concept: usize,
    #[serde(default)]
    editability_prompts: Option<Vec<String>>,
    #[serde(default)]
    prompts_file: Option<String>,
    concepts: Vec<ConceptEntry>,
}

fn default_clip_seconds() -> f64 {
    4.0
}

fn default_clips_per_concept() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptEntry {
    name: String,
    class_noun: String,
    category: Category,
    #[serde(default)]
    held_out: bool,
    #[serde(default)]
    clips: Option<Vec<String>>,
    #[serde(default)]
    layers: Option<Vec<Layer>>,
}

/// Where a concept's clips came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClipSource {
    Files { paths: Vec<PathBuf> },
    Fixture { layers: Vec<Layer> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestConcept {
    pub name: String,
    pub class_noun: String,
    pub category: Category,
    pub held_out: bool,
    pub source: ClipSource,
    pub clips: Vec<AudioClip>,
}

impl ManifestConcept {
    pub fn to_concept(&self) -> Result<Concept> {
        Concept::new(&self.name, &self.class_noun, self.clips.clone())
    }

    /// Fixture layers, when the concept was synthesized.
    pub fn layers(&self) -> Option<&[Layer]> {
        match &self.source {
            ClipSource::Fixture { layers } => Some(layers),
            ClipSource::Files { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub seed: u64,
    pub clip_seconds: f64,
    pub editability_prompts: Vec<String>,
    pub concepts: Vec<ManifestConcept>,
    /// SHA-256 of the manifest text (and prompt file, when used).
    pub digest: String,
}

impl DatasetManifest {
    pub fn concept(&self, name: &str) -> Option<&ManifestConcept> {
        self.concepts.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn held_out(&self) -> impl Iterator<Item = &ManifestConcept> {
        self.concepts.iter().filter(|c| c.held_out)
    }
}

fn load_err(path: &Path, field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        field: field.into(),
        detail: detail.into(),
    }
}

/// Parse prompt-file text: one template per line.
pub fn parse_prompt_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, path, base)
}

/// Parse manifest text. `path` is used in errors; relative clip and prompt
/// paths resolve against `base`.
pub fn parse_manifest(text: &str, path: &Path, base: &Path) -> Result<DatasetManifest> {
    let de = toml::Deserializer::parse(text).map_err(|e| load_err(path, "", e.to_string()))?;
    let file: ManifestFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        load_err(path, field, e.into_inner().message().to_string())
    })?;

    let mut digest_input = text.as_bytes().to_vec();
    let prompts = match (&file.editability_prompts, &file.prompts_file) {
        (Some(_), Some(_)) => {
            return Err(load_err(
                path,
                "prompts_file",
                "give editability_prompts or prompts_file, not both",
            ))
        }
        (None, None) => return Err(load_err(path, "editability_prompts", "missing prompt list")),
        (Some(list), None) => list.iter().map(|p| p.trim().to_string()).collect(),
        (None, Some(rel)) => {
            let p = base.join(rel);
            let body = std::fs::read_to_string(&p)
                .map_err(|_| load_err(path, "prompts_file", format!("cannot read {}", p.display())))?;
            digest_input.extend_from_slice(body.as_bytes());
            parse_prompt_lines(&body)
        }
    };
    if prompts.is_empty() {
        return Err(load_err(path, "editability_prompts", "prompt list is empty"));
    }
    for (i, p) in prompts.iter().enumerate() {
        if p.matches("{}").count() != 1 {
            return Err(load_err(
                path,
                format!("editability_prompts[{i}]"),
                format!("{p:?} must contain exactly one {{}} slot"),
            ));
        }
    }
    if !(file.clip_seconds >= 1.0 && file.clip_seconds.is_finite()) {
        return Err(load_err(path, "clip_seconds", "must be at least 1 s"));
    }
    if !(1..=MAX_CLIPS_PER_CONCEPT).contains(&file.clips_per_concept) {
        return Err(load_err(
            path,
            "clips_per_concept",
            format!("must be in 1..={MAX_CLIPS_PER_CONCEPT}"),
        ));
    }
    if file.concepts.is_empty() {
        return Err(load_err(path, "concepts", "at least one concept is required"));
    }

    let mut seen = BTreeSet::new();
    let mut concepts = Vec::with_capacity(file.concepts.len());
    for (i, entry) in file.concepts.iter().enumerate() {
        let at = |f: &str| format!("concepts[{i}].{f}");
        if entry.name.trim().is_empty() {
            return Err(load_err(path, at("name"), "empty name"));
        }
        if !seen.insert(entry.name.to_lowercase()) {
            return Err(load_err(
                path,
                at("name"),
                format!("duplicate concept {:?}", entry.name),
            ));
        }
        if entry.class_noun.trim().is_empty() {
            return Err(load_err(path, at("class_noun"), "empty class noun"));
        }
        if entry.category == Category::Ambient {
            return Err(load_err(
                path,
                at("category"),
                "concepts must be percussion, melodic or multi-instrument",
            ));
        }
        let (source, clips) = match (&entry.clips, &entry.layers) {
            (Some(_), Some(_)) => return Err(load_err(path, at("clips"), "give clips or layers, not both")),
            (None, None) => return Err(load_err(path, at("clips"), "give clips or layers")),
            (Some(files), None) => {
                if files.is_empty() || files.len() > MAX_CLIPS_PER_CONCEPT {
                    return Err(load_err(
                        path,
                        at("clips"),
                        format!("need 1..={MAX_CLIPS_PER_CONCEPT} clips"),
                    ));
                }
                let mut paths = Vec::new();
                let mut clips = Vec::new();
                for (j, rel) in files.iter().enumerate() {
                    let p = base.join(rel);
                    if !p.is_file() {
                        return Err(load_err(
                            path,
                            format!("concepts[{i}].clips[{j}]"),
                            format!("no such file {}", p.display()),
                        ));
                    }
                    let clip =
                        read_wav(&p).map_err(|e| load_err(path, format!("concepts[{i}].clips[{j}]"), e.to_string()))?;
                    clips.push(clip);
                    paths.push(p);
                }
                (ClipSource::Files { paths }, clips)
            }
            (None, Some(layers)) => {
                if layers.is_empty() {
                    return Err(load_err(path, at("layers"), "empty layer list"));
                }
                let clips = (0..file.clips_per_concept)
                    .map(|j| {
                        let seed = child_seed(file.seed, &["fixture", &entry.name, &j.to_string()]);
                        render_layers(layers, file.clip_seconds, seed)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| load_err(path, at("layers"), e.to_string()))?;
                (ClipSource::Fixture { layers: layers.clone() }, clips)
            }
        };
        if let Some(j) = clips.iter().position(|c| c.duration() < 1.0 - 1e-9) {
            return Err(load_err(
                path,
                format!("concepts[{i}].clips[{j}]"),
                "clip shorter than 1 s",
            ));
        }
        concepts.push(ManifestConcept {
            name: entry.name.clone(),
            class_noun: entry.class_noun.trim().to_string(),
            category: entry.category,
            held_out: entry.held_out,
            source,
            clips,
        });
    }

    Ok(DatasetManifest {
        name: file.name,
        seed: file.seed,
        clip_seconds: file.clip_seconds,
        editability_prompts: prompts,
        concepts,
        digest: super::sha256_hex(&digest_input),
    })
}
