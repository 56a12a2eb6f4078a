use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use tunelab::audio::{read_wav, write_wav, AudioClip};
use tunelab::corpus::{fill, noise_pool, NEUTRAL_TEMPLATES};
use tunelab::diffusion::{sample, style_transfer};
use tunelab::harness::{
    build_stack, emit_report, load_manifest, load_model, read_report_json, run_experiment, save_model, save_stack,
    summarize, write_sidecar, ExperimentOptions, ExperimentReport, LoadedModel, ReportFormat, Sidecar,
};
use tunelab::par::Exec;
use tunelab::personalization::personalize;
use tunelab::rng::{child_seed, child_seed_index};

use crate::config::RunConfig;
use crate::ConfigError;

/// Outcome of a command that can partially fail.
pub enum Outcome {
    Done,
    Partial(usize),
}

fn exec(cfg: &RunConfig) -> Exec {
    if cfg.parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn sidecar<A: Serialize>(out: &Path, command: &str, cfg: &RunConfig, args: &A, extra: serde_json::Value) -> Result<()> {
    let sc = Sidecar::new(command, cfg.seed, &json!({ "config": cfg, "args": args })).with_extra(extra);
    let p = write_sidecar(out, &sc)?;
    log::debug!("wrote {}", p.display());
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<LoadedModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// The concept phrase stored by `personalize`, if any.
fn stored_phrase(m: &LoadedModel) -> Option<&str> {
    m.meta.get("phrase").and_then(|v| v.as_str())
}

/// Fill `{}` in a prompt with the model's concept phrase.
fn resolve_prompt(m: &LoadedModel, prompt: &str) -> Result<String> {
    if !prompt.contains("{}") {
        return Ok(prompt.to_string());
    }
    match stored_phrase(m) {
        Some(p) => Ok(fill(prompt, p)),
        None => {
            Err(ConfigError("the prompt has a {} slot but the model carries no personalized concept".into()).into())
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    /// Output checkpoint.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn pretrain(cfg: &RunConfig, args: &PretrainArgs) -> Result<Outcome> {
    let stack = build_stack(&cfg.stack(), cfg.seed, exec(cfg))?;
    let summary = json!({
        "kind": "pretrained",
        "eval_loss_initial": stack.pretrain_log.initial_eval(),
        "eval_loss_final": stack.pretrain_log.final_eval(),
        "contrastive_final_loss": stack.contrastive_log.losses.last(),
    });
    create_parent(&args.out)?;
    save_stack(&stack, summary.clone(), &args.out)?;
    sidecar(&args.out, "pretrain", cfg, args, summary)?;
    println!(
        "pretrained model written to {} (eval loss {:.4} -> {:.4})",
        args.out.display(),
        stack.pretrain_log.initial_eval().unwrap_or(f64::NAN),
        stack.pretrain_log.final_eval().unwrap_or(f64::NAN)
    );
    Ok(Outcome::Done)
}

#[derive(Debug, Args, Serialize)]
pub struct PersonalizeArgs {
    /// Pretrained checkpoint.
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Concept name in the manifest.
    #[arg(long)]
    pub concept: String,
    /// Named configuration (overrides `personalize.config`).
    #[arg(long = "method-config")]
    pub method_config: Option<String>,
    /// Output checkpoint.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn personalize_cmd(cfg: &RunConfig, args: &PersonalizeArgs) -> Result<Outcome> {
    let base = load(&args.model)?;
    let manifest = load_manifest(&args.manifest)?;
    let mc = manifest.concept(&args.concept).ok_or_else(|| {
        ConfigError(format!(
            "no concept named {:?} in {}",
            args.concept,
            args.manifest.display()
        ))
    })?;
    let concept = mc.to_concept()?;
    let mut pcfg = cfg.personalization(args.method_config.as_deref())?;
    pcfg.seed = child_seed(cfg.seed, &["personalize", &concept.name, &pcfg.name]);
    let pool = if pcfg.mix {
        noise_pool(
            cfg.personalize.noise_pool_clips,
            manifest.clip_seconds,
            child_seed(cfg.seed, &["noise_pool"]),
        )?
    } else {
        Vec::new()
    };
    log::info!("personalizing {} with {}", concept.name, pcfg.name);
    let (model, log) = personalize(&base.model, &concept, &pcfg, &pool)?;
    let phrase = concept.phrase(pcfg.method);
    let meta = json!({
        "kind": "personalized",
        "concept": concept.name,
        "class_noun": concept.class_noun,
        "config": pcfg.name,
        "phrase": phrase,
        "final_loss": log.losses.last(),
    });
    create_parent(&args.out)?;
    save_model(&model, base.text_tower.as_ref(), meta.clone(), &args.out)?;
    sidecar(
        &args.out,
        "personalize",
        cfg,
        args,
        json!({ "personalization": pcfg, "result": meta }),
    )?;
    println!(
        "personalized {} ({}) written to {}; prompt with {:?}",
        concept.name,
        pcfg.name,
        args.out.display(),
        fill(NEUTRAL_TEMPLATES[0], &phrase)
    );
    Ok(Outcome::Done)
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Prompt text; a `{}` slot is filled with the personalized concept phrase.
    #[arg(long, short, default_value = "a recording of a {}")]
    pub prompt: String,
    /// Number of clips; more than one writes `<stem>-<i>.wav`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output WAV path.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("wav");
    path.with_file_name(format!("{stem}-{i}.{ext}"))
}

pub fn generate(cfg: &RunConfig, args: &GenerateArgs) -> Result<Outcome> {
    if args.count == 0 {
        bail!(ConfigError("--count must be positive".into()));
    }
    let m = load(&args.model)?;
    let prompt = resolve_prompt(&m, &args.prompt)?;
    create_parent(&args.out)?;
    for i in 0..args.count {
        let out = if args.count == 1 {
            args.out.clone()
        } else {
            numbered(&args.out, i)
        };
        let seed = child_seed_index(cfg.seed, "clip", i);
        let clip = sample(
            &m.model,
            &prompt,
            seed,
            cfg.sample.segments,
            cfg.sample.options(),
            exec(cfg),
        )?;
        write_wav(&clip, &out)?;
        sidecar(
            &out,
            "generate",
            cfg,
            args,
            json!({ "prompt": prompt, "clip_seed": seed }),
        )?;
        println!("{}", out.display());
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Args, Serialize)]
pub struct TransferArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Source WAV.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Fraction of the chain re-noised, in [0, 1].
    #[arg(long, short)]
    pub strength: f64,
    /// Target prompt; defaults to the personalized concept phrase.
    #[arg(long, short)]
    pub prompt: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn transfer(cfg: &RunConfig, args: &TransferArgs) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&args.strength) {
        bail!(ConfigError(format!("--strength {} is outside [0, 1]", args.strength)));
    }
    let m = load(&args.model)?;
    let prompt = match &args.prompt {
        Some(p) => resolve_prompt(&m, p)?,
        None => resolve_prompt(&m, "{}")?,
    };
    let input: AudioClip = read_wav(&args.input)?;
    let out = style_transfer(
        &m.model,
        &input,
        args.strength,
        &prompt,
        cfg.seed,
        cfg.sample.options(),
        exec(cfg),
    )?;
    create_parent(&args.out)?;
    write_wav(&out, &args.out)?;
    sidecar(&args.out, "transfer", cfg, args, json!({ "prompt": prompt }))?;
    println!("{}", args.out.display());
    Ok(Outcome::Done)
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Pretrained checkpoint (with its text tower).
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report path; CSV also writes `<stem>-summary.csv`.
    #[arg(long, short)]
    pub out: PathBuf,
    /// csv or json; inferred from the extension when omitted.
    #[arg(long, short)]
    pub format: Option<String>,
}

fn report_format(explicit: Option<&str>, path: &Path) -> Result<ReportFormat> {
    let s = explicit
        .map(str::to_string)
        .or_else(|| path.extension().and_then(|e| e.to_str()).map(str::to_string))
        .unwrap_or_else(|| "csv".into());
    s.parse().map_err(|e: tunelab::Error| ConfigError(e.to_string()).into())
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<Outcome> {
    let format = report_format(args.format.as_deref(), &args.out)?;
    let m = load(&args.model)?;
    let text = m.text_embedder().ok_or_else(|| {
        ConfigError(format!(
            "{} has no text tower; use a checkpoint written by `pretrain`",
            args.model.display()
        ))
    })?;
    let manifest = load_manifest(&args.manifest)?;
    let e = &cfg.experiment;
    let opts = ExperimentOptions {
        configs: cfg.experiment_configs()?,
        include_base: e.include_base,
        concepts: e.concepts.clone(),
        max_prompts: e.max_prompts,
        clips_per_prompt: e.clips_per_prompt,
        clip_segments: cfg.sample.segments,
        sample: cfg.sample.options(),
        key_profile: e.key_profile,
        noise_pool: Vec::new(),
        exec: exec(cfg),
    };
    let report = run_experiment(&manifest, &m.model, &text, &opts, cfg.seed)?;
    create_parent(&args.out)?;
    let written = emit_report(&report, format, &args.out)?;
    for p in &written {
        sidecar(
            p,
            "evaluate",
            cfg,
            args,
            json!({ "manifest_digest": report.metadata.manifest_digest }),
        )?;
    }
    print_summary(&report);
    let failed = report.failed_cells();
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "cell {} / {} failed: {}",
            r.concept,
            r.config,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(if failed == 0 {
        Outcome::Done
    } else {
        Outcome::Partial(failed)
    })
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// A JSON report written by `evaluate`.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Re-emit to this path.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, short)]
    pub format: Option<String>,
}

fn opt4(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<8} {:>5} {:>8} {:>8} {:>9} {:>6} {:>6} {:>6} {:>6}",
        "config", "cells", "clap_a", "clap_t", "fad", "bpm", "loud", "key", "scale"
    );
    for s in summarize(report) {
        println!(
            "{:<8} {:>5} {:>8} {:>8} {:>9} {:>6} {:>6} {:>6} {:>6}",
            s.config,
            s.cells,
            opt4(s.clap_a),
            opt4(s.clap_t),
            opt4(s.fad),
            opt4(s.bpm_match),
            opt4(s.loudness_match),
            opt4(s.key_match),
            opt4(s.scale_match)
        );
    }
    let r = &report.reference;
    println!(
        "ceilA {}  ceilT {}  floorT {}",
        opt4(r.ceil_a),
        opt4(r.ceil_t),
        opt4(r.floor_t)
    );
}

pub fn report(cfg: &RunConfig, args: &ReportArgs) -> Result<Outcome> {
    let report = read_report_json(&args.input)?;
    print_summary(&report);
    if let Some(out) = &args.out {
        let format = report_format(args.format.as_deref(), out)?;
        create_parent(out)?;
        for p in emit_report(&report, format, out)? {
            sidecar(&p, "report", cfg, args, serde_json::Value::Null)?;
        }
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Args, Serialize)]
pub struct FixturesArgs {
    /// Manifest whose fixture concepts are rendered.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; receives one folder of WAVs per concept and a
    /// `manifest.toml` that references them.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Serialize)]
struct FileManifest<'a> {
    name: String,
    editability_prompts: &'a [String],
    concepts: Vec<FileConcept<'a>>,
}

#[derive(Serialize)]
struct FileConcept<'a> {
    name: &'a str,
    class_noun: &'a str,
    category: tunelab::corpus::Category,
    held_out: bool,
    clips: Vec<String>,
}

pub fn fixtures(cfg: &RunConfig, args: &FixturesArgs) -> Result<Outcome> {
    let manifest = load_manifest(&args.manifest)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut concepts = Vec::new();
    for c in &manifest.concepts {
        let dir = slug(&c.name);
        std::fs::create_dir_all(args.out.join(&dir))?;
        let mut clips = Vec::new();
        for (j, clip) in c.clips.iter().enumerate() {
            let rel = format!("{dir}/{j}.wav");
            write_wav(clip, &args.out.join(&rel))?;
            clips.push(rel);
        }
        concepts.push(FileConcept {
            name: &c.name,
            class_noun: &c.class_noun,
            category: c.category,
            held_out: c.held_out,
            clips,
        });
    }
    let out_manifest = FileManifest {
        name: format!("{}-wav", manifest.name),
        editability_prompts: &manifest.editability_prompts,
        concepts,
    };
    let path = args.out.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&out_manifest)?).with_context(|| format!("writing {}", path.display()))?;
    sidecar(
        &path,
        "fixtures",
        cfg,
        args,
        json!({ "source_digest": manifest.digest }),
    )?;
    println!("rendered {} concepts to {}", manifest.concepts.len(), path.display());
    Ok(Outcome::Done)
}
