//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always show in
//! `cargo test` output. The process fails if any criterion outside
//! `KNOWN_RED` fails. Known-red criteria still print their honest verdict.
//!
//! The pretrained stack is cached under `CARGO_TARGET_TMPDIR`, keyed by a
//! hash of its configuration and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use tunelab::audio::mix_with_snr_at;
use tunelab::audio::{synth_fixture, AudioClip, FixtureKind, PitchClass, Scale};
use tunelab::codec::NormStats;
use tunelab::corpus::noise_pool;
use tunelab::diffusion::{
    ldm_loss_and_grads, style_transfer, ModelConfig, ModelState, Prediction, SampleOptions, Trainable, TrainingExample,
};
use tunelab::harness::{
    build_stack, expected_cell_clips, load_manifest, load_model, reference_lines, report_json, run_experiment,
    save_stack, sha256_hex, summarize, DatasetManifest, ExperimentOptions, ExperimentReport, LoadedModel, StackConfig,
    BASE_CONFIG,
};
use tunelab::metrics::{
    bpm_match, clap_a, clap_t, cosine, detect_key, estimate_bpm, fad, integrated_loudness, loudness_match,
    EmbeddingSet, KeyProfile, ToyEmbedder, BPM_TOLERANCE, LOUDNESS_TOLERANCE,
};
use tunelab::par::Exec;
use tunelab::personalization::{personalize, register_placeholder, Init, OptimizerKind, PersonalizationConfig};
use tunelab::text::{add_placeholder, PlaceholderInit, Vocab};

const ROOT_SEED: u64 = 20_240_917;
const KNOWN_RED: &[u32] = &[6];

// Criterion 1
const FD_REL_TOL: f64 = 1e-4;
const FD_BATCHES: usize = 10;
const FD_STEP: f64 = 1e-5;
const GRAD_BUDGET_S: f64 = 60.0;
// Criterion 2
const SUBSET_BUDGET_S: f64 = 300.0;
// Criterion 3
const FAD_SELF_TOL: f64 = 1e-9;
const FAD_1D_TOL: f64 = 1e-9;
const CLAP_TOL: f64 = 1e-12;
const TONE_LUFS: f64 = -3.01;
const TONE_LUFS_TOL: f64 = 0.1;
const BPM_READ_TOL: f64 = 1.0;
const KEY_MIN_ACCURACY: f64 = 0.95;
const METRIC_BUDGET_S: f64 = 300.0;
// Criterion 4
const PAPER_BPM_BAND: f64 = 5.0;
const PAPER_LUFS_BAND: f64 = 2.5;
// Criterion 5
const TRANSFER_SEEDS: u64 = 8;
const TRANSFER_P_MAX: f64 = 0.05;
const TRANSFER_BUDGET_S: f64 = 600.0;
// Criterion 6
const GAIN_MIN_WINS: usize = 3;
const E2E_BUDGET_S: f64 = 1800.0;
// Criterion 7
const MIX_SNR_DB: f64 = 20.0;
const MIX_SNR_TOL: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Outcome = Result<Verdict, String>;

fn manifest_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic.toml")
}

fn stack_config() -> StackConfig {
    StackConfig::default()
}

/// The pretrained stack, built once and cached on disk.
fn pretrained() -> LoadedModel {
    let cfg = stack_config();
    let key = serde_json::json!({ "cfg": cfg, "seed": ROOT_SEED, "version": env!("CARGO_PKG_VERSION") });
    let hash = sha256_hex(key.to_string().as_bytes());
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance-stack-{}.tlck", &hash[..16]));
    if let Ok(m) = load_model(&path) {
        return m;
    }
    let t = Instant::now();
    let stack = build_stack(&cfg, ROOT_SEED, Exec::Parallel).expect("pretraining");
    println!(
        "pretrained stack in {:.0} s (eval loss {:.3} -> {:.3})",
        t.elapsed().as_secs_f64(),
        stack.pretrain_log.initial_eval().unwrap_or(f64::NAN),
        stack.pretrain_log.final_eval().unwrap_or(f64::NAN)
    );
    save_stack(&stack, serde_json::Value::Null, &path).expect("caching the stack");
    load_model(&path).expect("reloading the stack")
}

// ---------------------------------------------------------------------------
// 1. gradients

fn fd_model(prediction: Prediction, seed: u64) -> (ModelState, usize) {
    let mut cfg = ModelConfig {
        n_steps: 40,
        time_dim: 6,
        hidden: 20,
        embed_dim: 8,
        text_hidden: 12,
        cond_dim: 10,
        prediction,
        ..ModelConfig::default()
    };
    cfg.embed_scale = 0.7;
    let vocab = Vocab::from_words(["a recording of tabla drum with rain"]);
    let dim = cfg.codec.latent_dim();
    let mut model = ModelState::init(cfg, vocab, NormStats::identity(dim), seed).unwrap();
    let id = add_placeholder(
        &mut model.table,
        &mut model.vocab,
        "<probe>",
        &PlaceholderInit::Baseline,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5);
    model
        .table
        .vectors
        .row_mut(id)
        .mapv_inplace(|v| v + 0.3 * rng.random::<f64>());
    (model, id)
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Which flat parameter a probe perturbs.
#[derive(Clone, Copy)]
enum Param {
    Row(usize, usize),
    Text(usize, usize),
    Denoiser(usize, usize),
}

fn nudge(model: &mut ModelState, p: Param, h: f64) {
    match p {
        Param::Row(r, j) => model.table.vectors[[r, j]] += h,
        Param::Text(k, i) => model.text.tensors_mut()[k].1[i] += h,
        Param::Denoiser(k, i) => model.denoiser.tensors_mut()[k].1[i] += h,
    }
}

fn loss_of(model: &ModelState, batch: &[TrainingExample]) -> f64 {
    ldm_loss_and_grads(model, batch, &Trainable::nothing()).unwrap().0
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut checked = 0;
    for (b, prediction) in (0..FD_BATCHES)
        .map(|b| (b, Prediction::Velocity))
        .chain((0..FD_BATCHES).map(|b| (b, Prediction::Epsilon)))
    {
        let seed = 100 + b as u64 + if prediction == Prediction::Epsilon { 1000 } else { 0 };
        let (mut model, id) = fd_model(prediction, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = model.latent_dim();
        let prompts = ["a recording of <probe>", "<probe> with rain", "a tabla drum", ""];
        let batch: Vec<TrainingExample> = prompts
            .iter()
            .map(|p| TrainingExample {
                z0: gauss(&mut rng, d),
                ids: model.tokenize(p),
                t: rng.random_range(1..=model.n_steps()),
                eps: gauss(&mut rng, d),
            })
            .collect();
        let trainable = Trainable {
            denoiser: true,
            text_encoder: true,
            rows: [id].into_iter().collect(),
        };
        let (_, grads) = ldm_loss_and_grads(&model, &batch, &trainable).map_err(|e| e.to_string())?;
        let named: BTreeMap<String, Vec<f64>> = grads.named().into_iter().map(|(n, g)| (n, g.to_vec())).collect();

        let mut probes: Vec<(&str, Param, f64)> = Vec::new();
        let row = &named[&tunelab::diffusion::row_name(id)];
        for j in 0..model.table.dim() {
            probes.push(("v_*", Param::Row(id, j), row[j]));
        }
        for (k, (name, t)) in model.text.tensors().iter().enumerate() {
            for _ in 0..4 {
                let i = rng.random_range(0..t.len());
                probes.push(("tau", Param::Text(k, i), named[*name][i]));
            }
        }
        for (k, (name, t)) in model.denoiser.tensors().iter().enumerate() {
            for _ in 0..4 {
                let i = rng.random_range(0..t.len());
                probes.push(("phi", Param::Denoiser(k, i), named[*name][i]));
            }
        }
        let mut by_class: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (class, p, analytic) in probes {
            nudge(&mut model, p, FD_STEP);
            let up = loss_of(&model, &batch);
            nudge(&mut model, p, -2.0 * FD_STEP);
            let down = loss_of(&model, &batch);
            nudge(&mut model, p, FD_STEP);
            let e = by_class.entry(class).or_default();
            e.0.push((up - down) / (2.0 * FD_STEP));
            e.1.push(analytic);
        }
        for (class, (fd, an)) in by_class {
            let diff: f64 = fd.iter().zip(&an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = fd
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(an.iter().map(|v| v * v).sum::<f64>().sqrt());
            let rel = if scale > 0.0 { diff / scale } else { 0.0 };
            let w = worst.entry(class).or_insert(0.0);
            *w = w.max(rel);
        }
        checked += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst.values().all(|&r| r < FD_REL_TOL) && worst.len() == 3 && secs < GRAD_BUDGET_S;
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(verdict(
        pass,
        format!("{checked} batches, worst relative error {detail} (< {FD_REL_TOL:.0e}), {secs:.1} s"),
    ))
}

// ---------------------------------------------------------------------------
// 2. parameter subsets

fn criterion_2(stack: &LoadedModel, manifest: &DatasetManifest) -> Outcome {
    let concept = manifest
        .concept("Dholak")
        .ok_or("no Dholak")?
        .to_concept()
        .map_err(|e| e.to_string())?;
    let model = &stack.model;
    let phi: BTreeSet<String> = model.denoiser.tensors().iter().map(|(n, _)| n.to_string()).collect();
    let tau: BTreeSet<String> = model.text.tensors().iter().map(|(n, _)| n.to_string()).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["TI-BL", "DB-BL", "DB-TE"] {
        let mut cfg = PersonalizationConfig::named(name).map_err(|e| e.to_string())?;
        cfg.seed = ROOT_SEED;
        let t = Instant::now();
        let (out, _) = personalize(model, &concept, &cfg, &[]).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        let (reference, expected) = match name {
            "TI-BL" => {
                let mut base = model.clone();
                let id = register_placeholder(&mut base, &concept, Init::Bl).map_err(|e| e.to_string())?;
                (base, [tunelab::diffusion::row_name(id)].into_iter().collect())
            }
            "DB-BL" => (model.clone(), phi.clone()),
            _ => (model.clone(), phi.union(&tau).cloned().collect::<BTreeSet<_>>()),
        };
        let changed = reference.changed_tensors(&out);
        let ok = changed == expected && secs < SUBSET_BUDGET_S;
        pass &= ok;
        parts.push(format!(
            "{name} {} ({} tensors, {secs:.0} s)",
            if ok { "ok" } else { "MISMATCH" },
            changed.len()
        ));
    }
    Ok(verdict(pass, parts.join("; ")))
}

// ---------------------------------------------------------------------------
// 3. metric oracles

fn set(vectors: Vec<Vec<f64>>) -> EmbeddingSet {
    EmbeddingSet::new(vectors, "oracle").unwrap()
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    set((0..n).map(|_| gauss(rng, d)).collect())
}

fn brute_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let e = |x: tunelab::Error| x.to_string();

    let a = random_set(&mut rng, 24, 6);
    let self_fad = fad(&a, &a).map_err(e)?.value.abs();

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let one_d = fad(&set(vec![vec![-h], vec![h]]), &set(vec![vec![1.0 - h], vec![1.0 + h]]))
        .map_err(e)?
        .value;

    let mut clap_err: f64 = 0.0;
    for _ in 0..20 {
        let (n, m, d) = (rng.random_range(1..8), rng.random_range(1..8), rng.random_range(2..12));
        let g = random_set(&mut rng, n, d);
        let r = random_set(&mut rng, m, d);
        let brute = g
            .vectors
            .iter()
            .flat_map(|x| r.vectors.iter().map(move |y| brute_cos(x, y)))
            .sum::<f64>()
            / (n * m) as f64;
        clap_err = clap_err.max((clap_a(&g, &r).map_err(e)? - brute).abs());
        let p = gauss(&mut rng, d);
        let brute_t = g.vectors.iter().map(|x| brute_cos(x, &p)).sum::<f64>() / n as f64;
        clap_err = clap_err.max((clap_t(&g, &p).map_err(e)? - brute_t).abs());
    }

    let n = 5 * 48_000;
    let tone = AudioClip::new(
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 997.0 * i as f64 / 48_000.0).sin())
            .collect(),
        48_000,
    )
    .map_err(e)?;
    let lufs = integrated_loudness(&tone).map_err(e)?.ok_or("tone gated out")?;

    let mut bpm_err: f64 = 0.0;
    for bpm in [66.0, 90.0, 120.0, 180.0] {
        let clip = synth_fixture(&FixtureKind::click_track(bpm), 8.0, 1).map_err(e)?;
        let got = estimate_bpm(&clip).map_err(e)?.bpm.ok_or("no tempo")?;
        bpm_err = bpm_err.max((got - bpm).abs());
    }

    let mut correct = 0;
    for pc in 0..12u8 {
        for (i, scale) in [Scale::Major, Scale::Minor].into_iter().enumerate() {
            for (j, bpm) in [80.0, 130.0].into_iter().enumerate() {
                let key = PitchClass::new(pc).map_err(e)?;
                let seed = pc as u64 * 4 + (i * 2 + j) as u64;
                let clip = synth_fixture(&FixtureKind::tonal(key, scale, bpm), 4.0, seed).map_err(e)?;
                if let Some(k) = detect_key(&clip, KeyProfile::default()).map_err(e)? {
                    correct += usize::from(k.key == key && k.scale == scale);
                }
            }
        }
    }
    let key_acc = correct as f64 / 48.0;
    let secs = t.elapsed().as_secs_f64();
    let pass = self_fad <= FAD_SELF_TOL
        && (one_d - 1.0).abs() <= FAD_1D_TOL
        && clap_err <= CLAP_TOL
        && (lufs - TONE_LUFS).abs() <= TONE_LUFS_TOL
        && bpm_err <= BPM_READ_TOL
        && key_acc >= KEY_MIN_ACCURACY
        && secs < METRIC_BUDGET_S;
    Ok(verdict(
        pass,
        format!(
            "fad(A,A) {self_fad:.1e}, 1-D fad {one_d:.12}, clap err {clap_err:.1e}, tone {lufs:.3} LUFS, \
             bpm err {bpm_err:.2}, keys {correct}/48, {secs:.0} s"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 4. tolerance bands

fn criterion_4() -> Outcome {
    let eps = 1e-9;
    let checks = [
        BPM_TOLERANCE == PAPER_BPM_BAND,
        LOUDNESS_TOLERANCE == PAPER_LUFS_BAND,
        bpm_match(125.0, 120.0),
        bpm_match(115.0, 120.0),
        !bpm_match(125.0 + eps, 120.0),
        !bpm_match(115.0 - eps, 120.0),
        loudness_match(-11.5, -14.0),
        loudness_match(-16.5, -14.0),
        !loudness_match(-11.5 + eps, -14.0),
        !loudness_match(-16.5 - eps, -14.0),
    ];
    let passed = checks.iter().filter(|&&c| c).count();
    Ok(verdict(
        passed == checks.len(),
        format!("{passed}/{} boundary checks (5 BPM, 2.5 LU, inclusive)", checks.len()),
    ))
}

// ---------------------------------------------------------------------------
// 5. style transfer

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman's rho and its two-sided p-value (t approximation).
fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    let t = rho * ((n - 2.0) / (1.0 - rho * rho).max(1e-300)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).unwrap();
    (rho, 2.0 * dist.cdf(-t.abs()))
}

fn criterion_5(stack: &LoadedModel, manifest: &DatasetManifest) -> Outcome {
    let t0 = Instant::now();
    let e = |x: tunelab::Error| x.to_string();
    let target = manifest.concept("Dholak").ok_or("no Dholak")?.to_concept().map_err(e)?;
    let mut cfg = PersonalizationConfig::named("TI-BL").map_err(e)?;
    cfg.seed = ROOT_SEED;
    let (model, _) = personalize(&stack.model, &target, &cfg, &[]).map_err(e)?;
    let prompt = target.placeholder.clone();
    let source = manifest.concept("Harpsichord").ok_or("no Harpsichord")?.clips[0].clone();
    let other = manifest.concept("Upright").ok_or("no Upright")?.clips[0].clone();
    let opts = SampleOptions::default();

    let zero = style_transfer(&model, &source, 0.0, &prompt, 1, opts, Exec::Parallel).map_err(e)?;
    let roundtrip = model
        .codec
        .decode_all(&model.codec.encode(&source).map_err(e)?, Exec::Parallel)
        .map_err(e)?;
    let zero_ok = zero
        .samples()
        .iter()
        .zip(roundtrip.samples())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && zero.len() == roundtrip.len();

    let one_a = style_transfer(&model, &source, 1.0, &prompt, 5, opts, Exec::Parallel).map_err(e)?;
    let one_b = style_transfer(&model, &other, 1.0, &prompt, 5, opts, Exec::Parallel).map_err(e)?;
    let one_ok = one_a
        .samples()
        .iter()
        .zip(one_b.samples())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && one_a.len() == one_b.len();

    let toy = ToyEmbedder::default();
    let src = toy.embed(&source).map_err(e)?;
    let strengths: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut curve = Vec::new();
    for &s in &strengths {
        let mut total = 0.0;
        for seed in 0..TRANSFER_SEEDS {
            let out = style_transfer(&model, &source, s, &prompt, 100 + seed, opts, Exec::Parallel).map_err(e)?;
            total += cosine(&toy.embed(&out).map_err(e)?, &src).map_err(e)?;
        }
        curve.push(total / TRANSFER_SEEDS as f64);
    }
    let (rho, p) = spearman(&strengths, &curve);
    let secs = t0.elapsed().as_secs_f64();
    let pass = zero_ok && one_ok && rho < 0.0 && p < TRANSFER_P_MAX && secs < TRANSFER_BUDGET_S;
    let c = curve.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ");
    Ok(verdict(
        pass,
        format!(
            "s=0 roundtrip {}, s=1 input-free {}, similarity [{c}] rho {rho:.3} p {p:.1e}, {secs:.0} s",
            if zero_ok { "bit-identical" } else { "DIFFERS" },
            if one_ok { "yes" } else { "NO" }
        ),
    ))
}

// ---------------------------------------------------------------------------
// 6. personalization gain

fn gain_counts(report: &ExperimentReport, base: &ExperimentReport, config: &str) -> (usize, Vec<String>) {
    let mut wins = 0;
    let mut notes = Vec::new();
    for b in base.rows.iter().filter(|r| r.config == BASE_CONFIG) {
        let after = report.row(&b.concept, config).and_then(|r| r.clap_a);
        if let (Some(before), Some(after)) = (b.clap_a, after) {
            wins += usize::from(after > before);
            notes.push(format!("{} {before:.3}->{after:.3}", b.concept));
        } else {
            notes.push(format!("{} absent", b.concept));
        }
    }
    (wins, notes)
}

fn criterion_6(stack: &LoadedModel, manifest: &DatasetManifest) -> Outcome {
    let t0 = Instant::now();
    let text = stack.text_embedder().ok_or("no text tower")?;
    let held_out: Vec<String> = manifest.held_out().map(|c| c.name.clone()).collect();
    let named = |n: &str| PersonalizationConfig::named(n).map_err(|e| e.to_string());
    let opts = ExperimentOptions {
        configs: vec![named("TI-BL")?, named("DB-BL")?],
        include_base: true,
        concepts: Some(held_out.clone()),
        max_prompts: Some(0),
        ..ExperimentOptions::default()
    };
    let report = run_experiment(manifest, &stack.model, &text, &opts, ROOT_SEED).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let (ti, ti_notes) = gain_counts(&report, &report, "TI-BL");
    let (db, db_notes) = gain_counts(&report, &report, "DB-BL");
    let pass = ti >= GAIN_MIN_WINS && db >= GAIN_MIN_WINS && secs < E2E_BUDGET_S && held_out.len() == 4;

    // Informational: the same cells with Adam at desk-scale rates.
    let mut ti_adam = named("TI-BL")?;
    ti_adam.name = "TI-ADAM".into();
    ti_adam.optimizer = OptimizerKind::Adam;
    ti_adam.lr = 0.5;
    let mut db_adam = named("DB-BL")?;
    db_adam.name = "DB-ADAM".into();
    db_adam.optimizer = OptimizerKind::Adam;
    db_adam.lr = 2e-4;
    let info_opts = ExperimentOptions {
        configs: vec![ti_adam, db_adam],
        include_base: false,
        ..opts
    };
    let info = run_experiment(manifest, &stack.model, &text, &info_opts, ROOT_SEED).map_err(|e| e.to_string())?;
    let (ti_a, ti_a_notes) = gain_counts(&info, &report, "TI-ADAM");
    let (db_a, db_a_notes) = gain_counts(&info, &report, "DB-ADAM");
    println!(
        "  info: Adam at desk-scale rates (TI lr 0.5, DB lr 2e-4): TI {ti_a}/4 [{}], DB {db_a}/4 [{}]",
        ti_a_notes.join(", "),
        db_a_notes.join(", ")
    );
    Ok(verdict(
        pass,
        format!(
            "pinned defaults: TI {ti}/4 [{}], DB {db}/4 [{}], need {GAIN_MIN_WINS}/4 each, {secs:.0} s",
            ti_notes.join(", "),
            db_notes.join(", ")
        ),
    ))
}

// ---------------------------------------------------------------------------
// 7. MIX plumbing

fn criterion_7(stack: &LoadedModel, manifest: &DatasetManifest) -> Outcome {
    let e = |x: tunelab::Error| x.to_string();
    let mc = manifest.concept("Maracas").ok_or("no Maracas")?;
    let concept = mc.to_concept().map_err(e)?;
    let pool = noise_pool(8, manifest.clip_seconds, ROOT_SEED).map_err(e)?;
    let mut cfg = PersonalizationConfig::named("TI-MIX").map_err(e)?;
    cfg.mix_prob = 1.0;
    cfg.steps = 30;
    cfg.seed = ROOT_SEED;
    let (_, log) = personalize(&stack.model, &concept, &cfg, &pool).map_err(e)?;
    let seg_len = stack.model.codec.config().segment_len;
    let mut worst: f64 = 0.0;
    let mut unmixed = 0;
    for d in &log.draws {
        let Some(rec) = d.mix else {
            unmixed += 1;
            continue;
        };
        let segment = concept.clips[d.clip].slice(d.segment * seg_len, seg_len);
        let noise = pool[rec.pool_index].samples();
        let fitted: Vec<f64> = (0..seg_len).map(|i| noise[(rec.offset + i) % noise.len()]).collect();
        // Independent recompute: gain from the two RMS levels, plain sum,
        // peak guard.
        let seg = segment.samples();
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let gain = rms(seg) / (rms(&fitted) * 10f64.powf(MIX_SNR_DB / 20.0));
        let own_noise: Vec<f64> = fitted.iter().map(|n| gain * n).collect();
        let mut own: Vec<f64> = seg.iter().zip(&own_noise).map(|(a, b)| a + b).collect();
        let peak = own.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            own.iter_mut().for_each(|v| *v /= peak);
        }
        let m = mix_with_snr_at(&segment, &pool[rec.pool_index], MIX_SNR_DB, rec.offset).map_err(e)?;
        if m.clip.samples().iter().zip(&own).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Ok(verdict(
                false,
                format!("draw {d:?}: mixture differs from the recompute"),
            ));
        }
        let snr = 10.0 * (rms(seg).powi(2) / rms(&own_noise).powi(2)).log10();
        worst = worst
            .max((snr - MIX_SNR_DB).abs())
            .max((rec.measured_snr_db - MIX_SNR_DB).abs());
    }
    let n = log.draws.len();
    let pass = n > 0 && unmixed == 0 && worst <= MIX_SNR_TOL;
    Ok(verdict(
        pass,
        format!("{n} segments, {unmixed} unmixed, worst |SNR - 20 dB| {worst:.2e} (<= {MIX_SNR_TOL})"),
    ))
}

// ---------------------------------------------------------------------------
// 8. reference-line geometry and determinism

fn criterion_8(stack: &LoadedModel, manifest: &DatasetManifest) -> Outcome {
    let t0 = Instant::now();
    let e = |x: tunelab::Error| x.to_string();
    let text = stack.text_embedder().ok_or("no text tower")?;
    let (lines, ref_clips, warnings) =
        reference_lines(manifest, &stack.model, &text, &ExperimentOptions::default(), ROOT_SEED).map_err(e)?;
    let (ceil_t, floor_t) = (
        lines.ceil_t.ok_or("ceilT absent")?,
        lines.floor_t.ok_or("floorT absent")?,
    );
    let geometry = ceil_t >= floor_t && warnings.is_empty();

    let named = |n: &str| PersonalizationConfig::named(n).map_err(|e| e.to_string());
    let concepts = vec!["Claves".to_string(), "Celesta".to_string()];
    let run = |exec| {
        let opts = ExperimentOptions {
            configs: vec![named("TI-BL")?],
            concepts: Some(concepts.clone()),
            max_prompts: Some(2),
            clips_per_prompt: 2,
            exec,
            ..ExperimentOptions::default()
        };
        run_experiment(manifest, &stack.model, &text, &opts, ROOT_SEED).map_err(|e| e.to_string())
    };
    let a = run(Exec::Parallel)?;
    let b = run(Exec::Sequential)?;
    let same = report_json(&a) == report_json(&b) && summarize(&a) == summarize(&b);
    let complete = a.rows.len() == 2 * 2
        && a.rows
            .iter()
            .all(|r| r.error.is_none() && r.clap_a.is_some() && r.clap_t.is_some())
        && a.metadata.cell_clips == expected_cell_clips(2, 2, 3, 2);
    let secs = t0.elapsed().as_secs_f64();
    let series = summarize(&a)
        .iter()
        .map(|s| {
            format!(
                "{} ({:.3}, {:.3})",
                s.config,
                s.clap_a.unwrap_or(f64::NAN),
                s.clap_t.unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok(verdict(
        geometry && same && complete,
        format!(
            "shipped suite ceilT {ceil_t:.4} >= floorT {floor_t:.4} ({ref_clips} clips); \
             report {} across runs, {}; series {series}; {secs:.0} s",
            if same { "identical" } else { "DIFFERS" },
            if complete { "complete" } else { "INCOMPLETE" }
        ),
    ))
}

fn main() {
    // Respect `cargo test -- <filter>`: run only when the filter (if any)
    // names this suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let manifest = load_manifest(manifest_path()).expect("shipped manifest");
    let stack = pretrained();

    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "gradient suite", Box::new(criterion_1)),
        (
            2,
            "parameter-subset discipline",
            Box::new(|| criterion_2(&stack, &manifest)),
        ),
        (3, "metric oracles", Box::new(criterion_3)),
        (4, "tolerance predicates", Box::new(criterion_4)),
        (
            5,
            "style-transfer endpoints",
            Box::new(|| criterion_5(&stack, &manifest)),
        ),
        (
            6,
            "end-to-end personalization gain",
            Box::new(|| criterion_6(&stack, &manifest)),
        ),
        (7, "MIX plumbing", Box::new(|| criterion_7(&stack, &manifest))),
        (
            8,
            "reference-line geometry",
            Box::new(|| criterion_8(&stack, &manifest)),
        ),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in &criteria {
        let t = Instant::now();
        let v = run().unwrap_or_else(|err| verdict(false, format!("error: {err}")));
        let known = KNOWN_RED.contains(id);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known red)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id} [{name}]: {tag} - {} ({:.1} s)",
            v.detail,
            t.elapsed().as_secs_f64()
        );
        if !v.pass && !known {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
