use ndarray::Array2;
use phasegen_core::codec::{CodecConfig, PhaseAutoencoder};
use phasegen_core::diffusion::{
    build_items, cfg_predict, make_schedule, q_sample, sample, sample_params, train_denoiser, Condition,
    Denoiser, DenoiserConfig, DiffTrainConfig, SamplerConfig, TextEncoder,
};
use phasegen_core::motion::{synth_corpus, CorpusConfig, FeatureNormalizer, PoseFeatures, Skeleton, Split};
use phasegen_core::phase::Representation;
use phasegen_nn::gradcheck::check_params;
use phasegen_nn::{Mat, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tiny_codec() -> CodecConfig {
    CodecConfig {
        num_phases: 4,
        f_max: 4,
        repr: Representation::SinCos,
        enc_frames: 4,
        enc_channels: 2,
        enc_kernel: 3,
        enc_hidden: 4,
        dec_hidden: 3,
        dec_kernel: 3,
    }
}

fn tiny_denoiser_config(pose_dim: usize) -> DenoiserConfig {
    DenoiserConfig {
        num_tokens: 4,
        token_dim: 3,
        text_dim: 8,
        pose_dim,
        width: 16,
        layers: 2,
        heads: 2,
        ff_mult: 2,
    }
}

#[test]
fn denoiser_loss_gradients_with_decode_term() {
    let data = synth_corpus(&CorpusConfig::with_counts(1), 2).unwrap();
    let feats: Vec<Mat> = data.clips.iter().map(PoseFeatures::from_clip).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let codec = PhaseAutoencoder::new(tiny_codec(), Skeleton::humanoid(), norm, 3).unwrap();
    let text = TextEncoder::build(data.clips.iter().filter_map(|c| c.text.as_deref()), 8, 0);
    let items = build_items(&data, None, &codec, &text, Split::Train).unwrap();
    let cfg = tiny_denoiser_config(1 + 4 * 17);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x_std: Vec<f64> = (0..12).map(|i| 0.5 + 0.1 * i as f64).collect();
    let model = Denoiser::new(cfg, vec![0.1; 12], x_std, 4).unwrap();
    let sched = make_schedule(100).unwrap();
    let picks: Vec<_> = items.iter().take(3).collect();
    let batch = model.make_batch(&picks, &sched, 0.3, 0.3, &mut rng).unwrap();
    assert!(batch.target.is_some());
    let rep = check_params(&model.store, 1e-5, 1e-6, |t| model.loss_graph(t, &batch, Some(&codec), 0.5));
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn zero_decode_weight_reduces_to_parameter_mse() {
    let cfg = tiny_denoiser_config(5);
    let model = Denoiser::new(cfg, vec![0.0; 12], vec![1.0; 12], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let items: Vec<_> = (0..4)
        .map(|_| phasegen_core::diffusion::DiffusionItem {
            x0: (0..12).map(|_| StandardNormal.sample(&mut rng)).collect(),
            text: None,
            pose: Some(vec![0.5; 5]),
            target: None,
        })
        .collect();
    let picks: Vec<_> = items.iter().collect();
    let sched = make_schedule(50).unwrap();
    let batch = model.make_batch(&picks, &sched, 0.0, 0.0, &mut rng).unwrap();
    let mut tape = Tape::new(&model.store);
    let l = model.loss_graph(&mut tape, &batch, None, 0.0);
    let loss = tape.scalar(l);
    let conds: Vec<&Condition> = batch.conds.iter().collect();
    let pred = model.predict(&batch.xn, &batch.steps, &conds).unwrap();
    let external = (&pred - &batch.x0).mapv(|v| v * v).mean().unwrap();
    assert!((loss - external).abs() < 1e-9);
}

#[test]
fn q_sample_moments() {
    let sched = make_schedule(1000).unwrap();
    let x0 = [0.7, -1.3, 2.0];
    let n = 300;
    let ab = sched.alpha_bar(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 100_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut norm_sq = 0.0;
    let mut norm_sq2 = 0.0;
    for _ in 0..draws {
        let eps: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = q_sample(&sched, &x0, n, &eps).unwrap();
        let ns: f64 = y.iter().map(|v| v * v).sum();
        norm_sq += ns;
        norm_sq2 += ns * ns;
        for i in 0..3 {
            sum[i] += y[i];
            sq[i] += y[i] * y[i];
        }
    }
    let nd = draws as f64;
    for i in 0..3 {
        let mean = sum[i] / nd;
        let var = sq[i] / nd - mean * mean;
        let want_mean = ab.sqrt() * x0[i];
        let want_var = 1.0 - ab;
        assert!((mean - want_mean).abs() < 3.0 * (want_var / nd).sqrt());
        // standard error of a Gaussian sample variance
        assert!((var - want_var).abs() < 3.0 * want_var * (2.0 / (nd - 1.0)).sqrt());
    }
    let m = norm_sq / nd;
    let se = ((norm_sq2 / nd - m * m) / nd).sqrt();
    let want: f64 = ab * x0.iter().map(|v| v * v).sum::<f64>() + (1.0 - ab) * 3.0;
    assert!((m - want).abs() < 3.0 * se);
    assert!(q_sample(&sched, &x0, 0, &[0.0; 3]).is_err());
    assert!(q_sample(&sched, &x0, 1, &[0.0; 2]).is_err());
}

#[test]
fn guidance_identities_on_a_real_model() {
    let cfg = tiny_denoiser_config(5);
    let model = Denoiser::new(cfg, vec![0.0; 12], vec![1.0; 12], 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xn = Array2::from_shape_simple_fn((2, 12), || StandardNormal.sample(&mut rng));
    let c = Condition {
        text: Some(vec![0.3; 8]),
        pose: Some(vec![0.1; 5]),
    };
    let conds = [&c, &c];
    let pose_only = c.without_text();
    let null = Condition::null();
    let steps = [10, 40];
    let base = model.predict(&xn, &steps, &[&pose_only, &pose_only]).unwrap();
    let full = model.predict(&xn, &steps, &conds).unwrap();
    let uncond = model.predict(&xn, &steps, &[&null, &null]).unwrap();
    let s0 = cfg_predict(&model, &xn, &steps, &conds, 0.0).unwrap();
    let s1 = cfg_predict(&model, &xn, &steps, &conds, 1.0).unwrap();
    for ((a, b), ((f, u), g)) in s0.iter().zip(&base).zip(full.iter().zip(&uncond).zip(&s1)) {
        assert!((a - b).abs() < 1e-12);
        assert!((g - (b + f - u)).abs() < 1e-12);
    }
}

#[test]
fn sampling_is_seeded_and_canonical() {
    let cfg = tiny_denoiser_config(5);
    let x_std = vec![2.0; 12];
    let model = Denoiser::new(cfg, vec![0.0; 12], x_std, 7).unwrap();
    let sched = make_schedule(100).unwrap();
    let cond = Condition {
        text: Some(vec![0.3; 8]),
        pose: None,
    };
    let sc = SamplerConfig {
        steps: 10,
        seed: 4,
        ..SamplerConfig::default()
    };
    let a = sample_params(&model, &sched, &cond, &sc).unwrap();
    let b = sample_params(&model, &sched, &cond, &sc).unwrap();
    assert_eq!(a, b);
    assert!(a.is_canonical());
    let other = SamplerConfig { seed: 5, ..sc.clone() };
    assert_ne!(sample(&model, &sched, &cond, &other).unwrap(), sample(&model, &sched, &cond, &sc).unwrap());

    let bad = Condition {
        text: Some(vec![0.0; 3]),
        pose: None,
    };
    assert!(sample(&model, &sched, &bad, &sc).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let cfg = tiny_denoiser_config(5);
    let model = Denoiser::new(cfg, vec![0.2; 12], vec![1.5; 12], 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = Denoiser::load(dir.path()).unwrap();
    let xn = Array2::from_elem((1, 12), 0.3);
    let c = Condition::null();
    assert_eq!(model.predict(&xn, &[3], &[&c]).unwrap(), back.predict(&xn, &[3], &[&c]).unwrap());
    assert_eq!(back.x_dim(), model.x_dim());
}

#[test]
fn training_lowers_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let items: Vec<_> = (0..64)
        .map(|i| phasegen_core::diffusion::DiffusionItem {
            x0: (0..12)
                .map(|j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 } + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect(),
            text: None,
            pose: None,
            target: None,
        })
        .collect();
    let cfg = tiny_denoiser_config(5);
    let train = DiffTrainConfig {
        iterations: 300,
        batch_size: 16,
        lr_start: 3e-3,
        lr_end: 3e-4,
        ..DiffTrainConfig::default()
    };
    let sched = make_schedule(100).unwrap();
    let (_, log) = train_denoiser(&items, &cfg, &train, &sched, None).unwrap();
    let head: f64 = log.losses[..30].iter().sum::<f64>() / 30.0;
    let tail: f64 = log.losses[270..].iter().sum::<f64>() / 30.0;
    assert!(tail < 0.7 * head, "{head} -> {tail}");
    let again = train_denoiser(&items, &cfg, &train, &sched, None).unwrap().1;
    assert_eq!(again.losses, log.losses);
}
