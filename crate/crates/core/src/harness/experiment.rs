//! Experiment orchestration: personalize every (concept, config) cell,
//! generate from the reconstruction and editability prompts, and score.
//!
//! Seeds (all derived from the root seed with [`child_seed`]):
//!
//! - personalization: `["personalize", concept, config]`
//! - generation: `["generate", concept, config, prompt index]`, then
//!   `child_seed_index(that, "clip", j)` for clip `j`
//! - default MIX noise pool: `["noise_pool"]`
//! - ceilT generations: `["reference", "ceil_t", prompt index]`, then per clip as above
//!
//! Prompt index 0 is the reconstruction prompt; editability prompts follow.

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestConcept};
use crate::audio::AudioClip;
use crate::corpus::{fill, noise_pool, strip_slot, Category, NEUTRAL_TEMPLATES};
use crate::diffusion::{sample, ModelState, SampleOptions};
use crate::error::{Error, Result};
use crate::metrics::{
    bpm_match, clap_a, clap_t, fad, key_scale_match, loudness_match, mean_pairwise_within, modal_key, music_features,
    Embedder, EmbedderKind, EmbeddingSet, KeyEstimate, KeyProfile, MusicFeatures, ToyEmbedder, BPM_TOLERANCE,
};
use crate::par::{self, Exec};
use crate::personalization::{personalize, PersonalizationConfig};
use crate::rng::{child_seed, child_seed_index};

/// Config name of the unpersonalized rows (class-noun prompts).
pub const BASE_CONFIG: &str = "BASE";
pub const CLIPS_PER_PROMPT: usize = 4;
pub const RECONSTRUCTION_TEMPLATE: &str = NEUTRAL_TEMPLATES[0];
pub const DEFAULT_NOISE_POOL: usize = 16;

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub configs: Vec<PersonalizationConfig>,
    /// Add a `BASE` row per concept: the pretrained model prompted with the
    /// class noun.
    pub include_base: bool,
    /// Restrict to these concept names (case-insensitive).
    pub concepts: Option<Vec<String>>,
    /// Use only the first `k` editability prompts.
    pub max_prompts: Option<usize>,
    pub clips_per_prompt: usize,
    /// One-second segments per generated clip.
    pub clip_segments: usize,
    pub sample: SampleOptions,
    pub key_profile: KeyProfile,
    /// Noise textures for MIX configs. When empty and a MIX config is
    /// selected, [`DEFAULT_NOISE_POOL`] textures are rendered.
    pub noise_pool: Vec<AudioClip>,
    pub exec: Exec,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            configs: PersonalizationConfig::all_named(),
            include_base: true,
            concepts: None,
            max_prompts: None,
            clips_per_prompt: CLIPS_PER_PROMPT,
            clip_segments: 4,
            sample: SampleOptions::default(),
            key_profile: KeyProfile::default(),
            noise_pool: Vec::new(),
            exec: Exec::default(),
        }
    }
}

/// Scores of one (concept, config) cell. Absent values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub concept: String,
    pub config: String,
    pub category: Category,
    pub held_out: bool,
    pub clap_a: Option<f64>,
    pub fad: Option<f64>,
    pub clap_t: Option<f64>,
    pub bpm_match: Option<f64>,
    pub loudness_match: Option<f64>,
    pub key_match: Option<f64>,
    pub scale_match: Option<f64>,
    pub clips: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLines {
    pub ceil_a: Option<f64>,
    pub ceil_t: Option<f64>,
    pub floor_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub format_version: u32,
    pub tool_version: String,
    pub root_seed: u64,
    pub manifest: String,
    pub manifest_digest: String,
    pub concepts: Vec<String>,
    pub configs: Vec<String>,
    /// Prompts per cell, counting the reconstruction prompt.
    pub prompts_per_cell: usize,
    pub clips_per_prompt: usize,
    pub clip_seconds: f64,
    pub cell_clips: usize,
    pub reference_clips: usize,
    pub audio_embedder: String,
    pub text_embedder: String,
    pub guidance: Option<f64>,
    /// Non-fatal problems: reference lines that could not be computed and
    /// FAD covariances that needed the ridge.
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub reference: ReferenceLines,
    pub rows: Vec<CellRow>,
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn row(&self, concept: &str, config: &str) -> Option<&CellRow> {
        self.rows.iter().find(|r| r.concept == concept && r.config == config)
    }
}

/// Clips generated by the cells of an experiment.
pub fn expected_cell_clips(concepts: usize, configs: usize, prompts_per_cell: usize, clips_per_prompt: usize) -> usize {
    concepts * configs * prompts_per_cell * clips_per_prompt
}

/// CLAP-T over groups of clips, each generated from (or paired with) one
/// prompt template. The text side is the template with its slot removed.
/// Every CLAP-T in a report goes through here. The mean is over all
/// (clip, prompt) pairs.
pub fn clap_t_groups(text: &Embedder, groups: &[(&str, &[AudioClip])], exec: Exec) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (template, clips) in groups {
        if clips.is_empty() {
            continue;
        }
        let t = text.embed_text(&strip_slot(template))?;
        let set = text.embed_set(clips, template, exec)?;
        total += clap_t(&set, &t)? * clips.len() as f64;
        n += clips.len();
    }
    Ok((n > 0).then(|| total / n as f64))
}

/// Music-descriptor references of a concept's training clips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingReference {
    /// Median training tempo, when every clip has one and they agree
    /// within the BPM tolerance.
    pub bpm: Option<f64>,
    pub loudness: Option<f64>,
    /// Modal key, when at least half the clips have a tonal center.
    pub key: Option<KeyEstimate>,
}

impl TrainingReference {
    pub fn from_features(features: &[MusicFeatures]) -> Self {
        let bpms: Vec<f64> = features.iter().filter_map(|f| f.bpm()).collect();
        let bpm = if !bpms.is_empty() && bpms.len() == features.len() {
            let mut s = bpms.clone();
            s.sort_by(f64::total_cmp);
            let spread = s[s.len() - 1] - s[0];
            (spread <= BPM_TOLERANCE).then(|| {
                let m = s.len() / 2;
                if s.len() % 2 == 1 {
                    s[m]
                } else {
                    0.5 * (s[m - 1] + s[m])
                }
            })
        } else {
            None
        };
        let louds: Vec<f64> = features.iter().filter_map(|f| f.loudness).collect();
        let loudness = (!louds.is_empty()).then(|| louds.iter().sum::<f64>() / louds.len() as f64);
        let keys: Vec<Option<KeyEstimate>> = features.iter().map(|f| f.key).collect();
        let tonal = keys.iter().flatten().count();
        let key = if 2 * tonal >= features.len() {
            modal_key(&keys)
        } else {
            None
        };
        Self { bpm, loudness, key }
    }
}

/// Match rates of generated clips against a training reference:
/// `(bpm, loudness, key, scale)`, each absent when the reference is.
pub fn match_rates(gen: &[MusicFeatures], reference: &TrainingReference) -> [Option<f64>; 4] {
    let n = gen.len() as f64;
    if gen.is_empty() {
        return [None; 4];
    }
    let rate = |hits: usize| hits as f64 / n;
    let bpm = reference
        .bpm
        .map(|r| rate(gen.iter().filter(|g| g.bpm().is_some_and(|b| bpm_match(b, r))).count()));
    let loud = reference.loudness.map(|r| {
        rate(
            gen.iter()
                .filter(|g| g.loudness.is_some_and(|l| loudness_match(l, r)))
                .count(),
        )
    });
    let (key, scale) = match reference.key {
        Some(r) => {
            let pairs: Vec<(bool, bool)> = gen
                .iter()
                .map(|g| g.key.map_or((false, false), |k| key_scale_match(&k, &r)))
                .collect();
            (
                Some(rate(pairs.iter().filter(|p| p.0).count())),
                Some(rate(pairs.iter().filter(|p| p.1).count())),
            )
        }
        None => (None, None),
    };
    [bpm, loud, key, scale]
}

struct ConceptData<'a> {
    concept: &'a ManifestConcept,
    train_toy: EmbeddingSet,
    reference: TrainingReference,
}

struct Ctx<'a> {
    model: &'a ModelState,
    text: &'a Embedder,
    toy: ToyEmbedder,
    opts: &'a ExperimentOptions,
    pool: &'a [AudioClip],
    prompts: Vec<String>,
    seed: u64,
}

impl Ctx<'_> {
    fn generate(&self, model: &ModelState, template: &str, phrase: &str, seed: u64) -> Result<Vec<AudioClip>> {
        let prompt = fill(template, phrase);
        (0..self.opts.clips_per_prompt)
            .map(|j| {
                sample(
                    model,
                    &prompt,
                    child_seed_index(seed, "clip", j),
                    self.opts.clip_segments,
                    self.opts.sample,
                    self.opts.exec,
                )
            })
            .collect()
    }

    fn toy_set(&self, clips: &[AudioClip], tag: &str) -> Result<EmbeddingSet> {
        let v = par::try_map(self.opts.exec, clips, |c| self.toy.embed(c))?;
        EmbeddingSet::new(v, tag)
    }

    fn cell(&self, data: &ConceptData, cfg: Option<&PersonalizationConfig>) -> Result<(CellRow, bool)> {
        let concept = data.concept;
        let cfg_name = cfg.map_or(BASE_CONFIG.to_string(), |c| c.name.clone());
        let personalized;
        let (model, phrase) = match cfg {
            None => (self.model, concept.class_noun.clone()),
            Some(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = child_seed(self.seed, &["personalize", &concept.name, &cfg.name]);
                let c = concept.to_concept()?;
                personalized = personalize(self.model, &c, &cfg, self.pool)?.0;
                (&personalized, c.phrase(cfg.method))
            }
        };
        let mut groups: Vec<(String, Vec<AudioClip>)> = Vec::with_capacity(self.prompts.len());
        for (pi, template) in self.prompts.iter().enumerate() {
            let seed = child_seed(self.seed, &["generate", &concept.name, &cfg_name, &pi.to_string()]);
            groups.push((template.clone(), self.generate(model, template, &phrase, seed)?));
        }
        let clips = groups.iter().map(|g| g.1.len()).sum();
        let recon = &groups[0].1;
        let gen_toy = self.toy_set(recon, "reconstruction")?;
        let clap_a_v = clap_a(&gen_toy, &data.train_toy)?;
        let fad_r = fad(&gen_toy, &data.train_toy)?;
        let edit: Vec<(&str, &[AudioClip])> = groups[1..].iter().map(|(t, c)| (t.as_str(), c.as_slice())).collect();
        let clap_t_v = clap_t_groups(self.text, &edit, self.opts.exec)?;
        let feats = par::try_map(self.opts.exec, recon, |c| music_features(c, self.opts.key_profile))?;
        let [bpm, loud, key, scale] = match_rates(&feats, &data.reference);
        let row = CellRow {
            concept: concept.name.clone(),
            config: cfg_name,
            category: concept.category,
            held_out: concept.held_out,
            clap_a: Some(clap_a_v),
            fad: Some(fad_r.value),
            clap_t: clap_t_v,
            bpm_match: bpm,
            loudness_match: loud,
            key_match: key,
            scale_match: scale,
            clips,
            error: None,
        };
        Ok((row, fad_r.regularized))
    }
}

fn failed_row(concept: &ManifestConcept, config: &str, err: &Error) -> CellRow {
    CellRow {
        concept: concept.name.clone(),
        config: config.to_string(),
        category: concept.category,
        held_out: concept.held_out,
        clap_a: None,
        fad: None,
        clap_t: None,
        bpm_match: None,
        loudness_match: None,
        key_match: None,
        scale_match: None,
        clips: 0,
        error: Some(err.to_string()),
    }
}

/// Reference lines over the selected concepts. ceilT generations use the
/// base model and the slot-stripped editability prompts.
fn reference_lines_for(ctx: &Ctx, data: &[ConceptData], warnings: &mut Vec<String>) -> (ReferenceLines, usize) {
    let mut record = |name: &str, r: Result<Option<f64>>| match r {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{name} not computed: {e}");
            warnings.push(format!("{name} not computed: {e}"));
            None
        }
    };
    let ceil_a = record(
        "ceilA",
        data.iter()
            .map(|d| mean_pairwise_within(&d.train_toy))
            .collect::<Result<Vec<_>>>()
            .map(|w| mean_of(w.into_iter().flatten())),
    );

    let edit = &ctx.prompts[1..];
    let mut reference_clips = 0;
    let ceil_t = (|| {
        let mut generated = Vec::with_capacity(edit.len());
        for (i, template) in edit.iter().enumerate() {
            let seed = child_seed(ctx.seed, &["reference", "ceil_t", &(i + 1).to_string()]);
            let stripped = strip_slot(template);
            generated.push(ctx.generate(ctx.model, &stripped, "", seed)?);
        }
        reference_clips = generated.iter().map(Vec::len).sum();
        let groups: Vec<(&str, &[AudioClip])> = edit
            .iter()
            .map(String::as_str)
            .zip(generated.iter().map(Vec::as_slice))
            .collect();
        clap_t_groups(ctx.text, &groups, ctx.opts.exec)
    })();
    let ceil_t = record("ceilT", ceil_t);

    let floor_t = data
        .iter()
        .map(|d| {
            let groups: Vec<(&str, &[AudioClip])> =
                edit.iter().map(|t| (t.as_str(), d.concept.clips.as_slice())).collect();
            clap_t_groups(ctx.text, &groups, ctx.opts.exec)
        })
        .collect::<Result<Vec<_>>>()
        .map(|f| mean_of(f.into_iter().flatten()));
    let floor_t = record("floorT", floor_t);
    (
        ReferenceLines {
            ceil_a,
            ceil_t,
            floor_t,
        },
        reference_clips,
    )
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn select<'m>(
    manifest: &'m DatasetManifest,
    text: &Embedder,
    opts: &ExperimentOptions,
) -> Result<Vec<&'m ManifestConcept>> {
    if opts.clips_per_prompt == 0 || opts.clip_segments == 0 {
        return Err(Error::Config(
            "clips_per_prompt and clip_segments must be positive".into(),
        ));
    }
    if text.kind() != EmbedderKind::ContrastiveTrained {
        return Err(Error::Config(format!(
            "CLAP-T needs a text tower; the {} embedder has none",
            text.kind().name()
        )));
    }
    match &opts.concepts {
        None => Ok(manifest.concepts.iter().collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                manifest
                    .concept(n)
                    .ok_or_else(|| Error::Config(format!("no concept named {n:?} in the manifest")))
            })
            .collect(),
    }
}

/// The reconstruction prompt followed by the selected editability prompts.
fn prompt_list(manifest: &DatasetManifest, opts: &ExperimentOptions) -> Vec<String> {
    let k = opts
        .max_prompts
        .unwrap_or(usize::MAX)
        .min(manifest.editability_prompts.len());
    let mut prompts = vec![RECONSTRUCTION_TEMPLATE.to_string()];
    prompts.extend(manifest.editability_prompts[..k].iter().cloned());
    prompts
}

fn concept_data<'a>(ctx: &Ctx, selected: &[&'a ManifestConcept]) -> Result<Vec<ConceptData<'a>>> {
    selected
        .iter()
        .map(|c| {
            let train_toy = ctx.toy_set(&c.clips, "training")?;
            let feats = par::try_map(ctx.opts.exec, &c.clips, |clip| {
                music_features(clip, ctx.opts.key_profile)
            })?;
            Ok(ConceptData {
                concept: c,
                train_toy,
                reference: TrainingReference::from_features(&feats),
            })
        })
        .collect()
}

/// Only the reference lines (ceilA, ceilT, floorT) over the selected
/// concepts and prompts, computed exactly as [`run_experiment`] does.
/// Returns the lines, the number of clips generated for ceilT, and
/// warnings for lines that could not be computed.
pub fn reference_lines(
    manifest: &DatasetManifest,
    model: &ModelState,
    text: &Embedder,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<(ReferenceLines, usize, Vec<String>)> {
    let selected = select(manifest, text, opts)?;
    let ctx = Ctx {
        model,
        text,
        toy: ToyEmbedder::default(),
        opts,
        pool: &[],
        prompts: prompt_list(manifest, opts),
        seed,
    };
    let data = concept_data(&ctx, &selected)?;
    let mut warnings = Vec::new();
    let (lines, clips) = reference_lines_for(&ctx, &data, &mut warnings);
    Ok((lines, clips, warnings))
}

/// Run every selected (concept, config) cell and the reference lines.
/// Cell failures are recorded in their rows and reference-line failures in
/// the metadata warnings; the error return is for invalid options and
/// unreadable training clips.
pub fn run_experiment(
    manifest: &DatasetManifest,
    model: &ModelState,
    text: &Embedder,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<ExperimentReport> {
    if opts.clips_per_prompt == 0 || opts.clip_segments == 0 {
        return Err(Error::Config(
            "clips_per_prompt and clip_segments must be positive".into(),
        ));
    }
    if opts.configs.is_empty() && !opts.include_base {
        return Err(Error::Config("no configurations selected".into()));
    }
    let selected = select(manifest, text, opts)?;
    let rendered_pool;
    let pool: &[AudioClip] = if opts.noise_pool.is_empty() && opts.configs.iter().any(|c| c.mix) {
        rendered_pool = noise_pool(
            DEFAULT_NOISE_POOL,
            manifest.clip_seconds,
            child_seed(seed, &["noise_pool"]),
        )?;
        &rendered_pool
    } else {
        &opts.noise_pool
    };
    let ctx = Ctx {
        model,
        text,
        toy: ToyEmbedder::default(),
        opts,
        pool,
        prompts: prompt_list(manifest, opts),
        seed,
    };
    let data = concept_data(&ctx, &selected)?;

    let mut configs: Vec<Option<&PersonalizationConfig>> = Vec::new();
    if opts.include_base {
        configs.push(None);
    }
    configs.extend(opts.configs.iter().map(Some));
    let cells: Vec<(usize, Option<&PersonalizationConfig>)> = (0..data.len())
        .flat_map(|i| configs.iter().map(move |c| (i, *c)))
        .collect();
    let results = par::map(opts.exec, &cells, |&(i, cfg)| {
        let name = cfg.map_or(BASE_CONFIG, |c| c.name.as_str());
        match ctx.cell(&data[i], cfg) {
            Ok(r) => r,
            Err(e) => (failed_row(data[i].concept, name, &e), false),
        }
    });
    let regularized = results.iter().filter(|r| r.1).count();
    let rows: Vec<CellRow> = results.into_iter().map(|r| r.0).collect();
    let cell_clips = rows.iter().map(|r| r.clips).sum();
    let mut warnings = Vec::new();
    if regularized > 0 {
        warnings.push(format!(
            "FAD covariances were ridge-regularized in {regularized} cell(s): sets smaller than the embedding dimension"
        ));
    }
    let (reference, reference_clips) = reference_lines_for(&ctx, &data, &mut warnings);

    let metadata = ReportMetadata {
        format_version: super::REPORT_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        root_seed: seed,
        manifest: manifest.name.clone(),
        manifest_digest: manifest.digest.clone(),
        concepts: data.iter().map(|d| d.concept.name.clone()).collect(),
        configs: configs
            .iter()
            .map(|c| c.map_or(BASE_CONFIG.to_string(), |c| c.name.clone()))
            .collect(),
        prompts_per_cell: ctx.prompts.len(),
        clips_per_prompt: opts.clips_per_prompt,
        clip_seconds: opts.clip_segments as f64 * model.codec.config().segment_len as f64
            / model.codec.config().sample_rate as f64,
        cell_clips,
        reference_clips,
        audio_embedder: EmbedderKind::ToyAudioFeatures.name().to_string(),
        text_embedder: text.kind().name().to_string(),
        guidance: opts.sample.guidance,
        warnings,
    };
    Ok(ExperimentReport {
        metadata,
        reference,
        rows,
    })
}
