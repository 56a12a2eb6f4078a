use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tunelab::audio::{synth_fixture, FixtureKind};
use tunelab::codec::NormStats;
use tunelab::diffusion::{
    ddpm_step, forward_noise, ldm_loss, ldm_loss_and_grads, make_schedule, read_checkpoint, sample, sample_latents,
    style_transfer, time_embedding, write_checkpoint, ModelConfig, ModelState, Prediction, SampleOptions, Trainable,
    TrainingExample,
};
use tunelab::par::Exec;
use tunelab::text::{add_placeholder, PlaceholderInit, Vocab};

fn small_model(prediction: Prediction, seed: u64) -> ModelState {
    let cfg = ModelConfig {
        n_steps: 30,
        time_dim: 8,
        hidden: 24,
        embed_dim: 8,
        text_hidden: 12,
        cond_dim: 10,
        prediction,
        ..ModelConfig::default()
    };
    let vocab = Vocab::from_words(["a recording of bright piano with rain"]);
    let dim = cfg.codec.latent_dim();
    ModelState::init(cfg, vocab, NormStats::identity(dim), seed).unwrap()
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn batch(model: &ModelState, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.latent_dim();
    ["a recording of piano", "bright piano with rain", ""]
        .iter()
        .map(|p| TrainingExample {
            z0: gauss(&mut rng, d),
            ids: model.tokenize(p),
            t: rng.random_range(1..=model.n_steps()),
            eps: gauss(&mut rng, d),
        })
        .collect()
}

#[test]
fn schedule_is_linear_with_cumulative_products() {
    let s = make_schedule(50, 1e-3, 0.2).unwrap();
    let mut prod = 1.0;
    for t in 1..=50 {
        let beta = 1e-3 + (0.2 - 1e-3) * (t - 1) as f64 / 49.0;
        assert_relative_eq!(s.beta(t), beta, max_relative = 1e-12);
        prod *= 1.0 - beta;
        assert_relative_eq!(s.alpha_bar(t), prod, max_relative = 1e-12);
    }
    assert_eq!(s.alpha_bar(0), 1.0);
    assert!(s.check_step(51).is_err());
}

#[test]
fn forward_noise_is_the_closed_form() {
    let s = make_schedule(20, 1e-3, 0.2).unwrap();
    let z0 = [1.0, -2.0, 0.5];
    let eps = [0.3, 0.1, -1.0];
    assert_eq!(forward_noise(&z0, 0, &eps, &s).unwrap(), z0.to_vec());
    let ab = s.alpha_bar(7);
    let zt = forward_noise(&z0, 7, &eps, &s).unwrap();
    for i in 0..3 {
        assert_relative_eq!(
            zt[i],
            ab.sqrt() * z0[i] + (1.0 - ab).sqrt() * eps[i],
            max_relative = 1e-14
        );
    }
    assert!(forward_noise(&z0, 21, &eps, &s).is_err());
    assert!(forward_noise(&z0, 3, &eps[..2], &s).is_err());
}

#[test]
fn time_embedding_frequencies_span_one_to_one_over_n() {
    let (n, dim) = (100, 16);
    let e = time_embedding(37, n, dim);
    assert_eq!(e.len(), dim);
    for k in 0..dim / 2 {
        assert_relative_eq!(e[k].powi(2) + e[k + dim / 2].powi(2), 1.0, max_relative = 1e-12);
    }
    assert_relative_eq!(e[0], 37f64.sin(), max_relative = 1e-12);
    assert_relative_eq!(e[dim / 2 - 1], (37.0 / n as f64).sin(), max_relative = 1e-12);
}

#[test]
fn last_reverse_step_recovers_z0_from_the_true_noise() {
    let s = make_schedule(10, 0.05, 0.3).unwrap();
    let z0 = [0.7, -1.2, 0.0, 2.5];
    let eps = [1.0, 0.5, -0.3, -2.0];
    let z1 = forward_noise(&z0, 1, &eps, &s).unwrap();
    let xi = [9.0; 4];
    let back = ddpm_step(&s, 1, &z1, &eps, Some(&xi));
    for (a, b) in back.iter().zip(&z0) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn ddpm_step_adds_sigma_noise_above_step_one() {
    let s = make_schedule(10, 0.05, 0.3).unwrap();
    let z = [0.4, -0.1];
    let e = [0.2, 0.3];
    let xi = [1.0, -1.0];
    let det = ddpm_step(&s, 5, &z, &e, None);
    let sto = ddpm_step(&s, 5, &z, &e, Some(&xi));
    let sigma = s.beta(5).sqrt();
    assert_relative_eq!(sto[0] - det[0], sigma, max_relative = 1e-12);
    assert_relative_eq!(sto[1] - det[1], -sigma, max_relative = 1e-12);
    let expect = (z[0] - s.beta(5) / (1.0 - s.alpha_bar(5)).sqrt() * e[0]) / s.alpha(5).sqrt();
    assert_relative_eq!(det[0], expect, max_relative = 1e-12);
}

#[test]
fn velocity_coefficients_turn_the_velocity_target_into_noise() {
    let model = small_model(Prediction::Velocity, 1);
    for t in [1, 7, 30] {
        let (skip, scale) = model.eps_coefficients(t);
        assert_relative_eq!(skip * skip + scale * scale, 1.0, max_relative = 1e-12);
        let ab = model.schedule.alpha_bar(t);
        let (z0, eps) = (0.8, -1.3);
        let zt = ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
        let v = ab.sqrt() * eps - (1.0 - ab).sqrt() * z0;
        assert_relative_eq!(skip * zt + scale * v, eps, epsilon = 1e-12);
    }
    assert_eq!(small_model(Prediction::Epsilon, 1).eps_coefficients(5), (0.0, 1.0));
}

#[test]
fn loss_matches_between_entry_points_and_empty_selection_has_no_gradients() {
    let model = small_model(Prediction::Velocity, 2);
    let b = batch(&model, 3);
    let (l1, g) = ldm_loss_and_grads(&model, &b, &Trainable::nothing()).unwrap();
    let l2 = ldm_loss(&model, &b).unwrap();
    assert_relative_eq!(l1, l2, max_relative = 1e-12);
    assert!(g.named().is_empty());
    let (_, g) = ldm_loss_and_grads(&model, &b, &Trainable::all(&model)).unwrap();
    let names: Vec<String> = g.named().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 5 + 4 + model.table.rows());
}

#[test]
fn gradient_matches_finite_differences_on_a_few_coordinates() {
    let mut model = small_model(Prediction::Epsilon, 4);
    let id = add_placeholder(&mut model.table, &mut model.vocab, "<x>", &PlaceholderInit::Baseline).unwrap();
    let mut b = batch(&model, 5);
    b[0].ids = model.tokenize("a recording of <x>");
    let (_, g) = ldm_loss_and_grads(&model, &b, &Trainable::row(id)).unwrap();
    let grad = g.rows[&id].clone();
    let h = 1e-5;
    for j in 0..model.table.dim() {
        model.table.vectors[[id, j]] += h;
        let up = ldm_loss(&model, &b).unwrap();
        model.table.vectors[[id, j]] -= 2.0 * h;
        let down = ldm_loss(&model, &b).unwrap();
        model.table.vectors[[id, j]] += h;
        assert_relative_eq!(grad[j], (up - down) / (2.0 * h), epsilon = 1e-8, max_relative = 1e-4);
    }
}

#[test]
fn sampling_is_seeded_and_shaped() {
    let model = small_model(Prediction::Velocity, 6);
    let opts = SampleOptions::default();
    let a = sample(&model, "bright piano", 9, 2, opts, Exec::Parallel).unwrap();
    let b = sample(&model, "bright piano", 9, 2, opts, Exec::Sequential).unwrap();
    let c = sample(&model, "bright piano", 10, 2, opts, Exec::Parallel).unwrap();
    assert_eq!(a.len(), 2 * 16_000);
    assert_eq!(a.samples(), b.samples());
    assert_ne!(a.samples(), c.samples());
}

#[test]
fn unit_guidance_equals_plain_conditioning() {
    let model = small_model(Prediction::Velocity, 7);
    let plain = SampleOptions {
        stochastic: false,
        guidance: None,
    };
    let guided = SampleOptions {
        guidance: Some(1.0),
        ..plain
    };
    let a = sample_latents(&model, "piano with rain", 3, 2, plain).unwrap();
    let b = sample_latents(&model, "piano with rain", 3, 2, guided).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.values.iter().zip(&y.values) {
            assert_relative_eq!(u, v, epsilon = 1e-9);
        }
    }
}

#[test]
fn style_transfer_rejects_strength_outside_unit_interval() {
    let model = small_model(Prediction::Velocity, 8);
    let clip = synth_fixture(&FixtureKind::click_track(100.0), 1.0, 1).unwrap();
    for s in [-0.1, 1.01, f64::NAN] {
        assert!(style_transfer(&model, &clip, s, "piano", 1, SampleOptions::default(), Exec::Sequential).is_err());
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut model = small_model(Prediction::Velocity, 11);
    add_placeholder(&mut model.table, &mut model.vocab, "<c>", &PlaceholderInit::Baseline).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&model, serde_json::json!({ "note": "x" }), &mut buf).unwrap();
    let (back, extra) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(extra["note"], "x");
    assert!(model.changed_tensors(&back).is_empty());
    assert_eq!(back.config, model.config);
    assert_eq!(
        back.tokenize("a recording of <c>"),
        model.tokenize("a recording of <c>")
    );
    let b = batch(&model, 1);
    assert_eq!(
        ldm_loss(&model, &b).unwrap().to_bits(),
        ldm_loss(&back, &b).unwrap().to_bits()
    );

    let mut bad = buf.clone();
    bad[0] ^= 0xff;
    assert!(read_checkpoint(bad.as_slice()).is_err());
    assert!(read_checkpoint(&buf[..buf.len() / 2]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_bar_is_decreasing_and_positive(n in 2usize..400, b1 in 1e-5f64..0.05, extra in 0.0f64..0.5) {
        let bn = (b1 + extra).min(0.99);
        let s = make_schedule(n, b1, bn).unwrap();
        for t in 1..=n {
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            prop_assert!(s.alpha_bar(t) > 0.0);
        }
    }

    #[test]
    fn forward_noise_keeps_orthonormal_inputs_on_the_unit_circle(t in 0usize..=100) {
        let s = make_schedule(100, 1e-3, 0.2).unwrap();
        let zt = forward_noise(&[1.0, 0.0], t, &[0.0, 1.0], &s).unwrap();
        prop_assert!((zt[0].powi(2) + zt[1].powi(2) - 1.0).abs() < 1e-12);
    }
}
