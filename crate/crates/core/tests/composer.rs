use ndarray::Array2;
use phasegen_core::codec::{CodecConfig, PhaseAutoencoder};
use phasegen_core::composer::{
    blend, blend_at, decode_interpolated, generate_long, interpolate, repeat_phase, ComposeConfig, ComposeMode,
    CompositionPlan, PlannedSegment,
};
use phasegen_core::diffusion::{make_schedule, Denoiser, DenoiserConfig, ModelStack, SamplerConfig, TextEncoder};
use phasegen_core::motion::{synth_corpus, CorpusConfig, FeatureNormalizer, PoseFeatures, Skeleton};
use phasegen_core::phase::{FramePlan, FrequencySet, PhaseParams, PhaseSignal, Representation};
use phasegen_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(m: usize, seed: u64) -> PhaseParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || (0..m).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    PhaseParams::new(v(), v(), v()).unwrap()
}

fn max_abs_diff(a: ndarray::ArrayView2<f64>, b: ndarray::ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn signal(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> PhaseSignal {
    PhaseSignal {
        samples: Array2::from_shape_fn((rows, cols), |(t, c)| f(t, c)),
        plan: FramePlan::periodic(10.0, rows, 0, 1),
        repr: Representation::SinCos,
    }
}

/// Untrained but complete stack; enough to exercise every contract that
/// does not depend on learned behaviour.
fn tiny_stack(period: usize) -> ModelStack {
    let data = synth_corpus(&CorpusConfig::with_counts(1), 3).unwrap();
    let feats: Vec<_> = data.clips.iter().map(PoseFeatures::from_clip).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let config = CodecConfig {
        num_phases: 6,
        f_max: 6,
        enc_frames: 8,
        enc_channels: 4,
        enc_hidden: 16,
        dec_hidden: 16,
        ..CodecConfig::default()
    };
    let codec = PhaseAutoencoder::new(config, Skeleton::humanoid(), norm, 5).unwrap();
    let text = TextEncoder::build(data.clips.iter().filter_map(|c| c.text.as_deref()), 16, 0);
    let dcfg = DenoiserConfig {
        num_tokens: 6,
        token_dim: 3,
        text_dim: 16,
        pose_dim: 1 + 4 * 17,
        width: 16,
        layers: 1,
        heads: 2,
        ff_mult: 2,
    };
    let denoiser = Denoiser::new(dcfg, vec![0.0; 18], vec![0.3; 18], 9).unwrap();
    ModelStack {
        codec,
        denoiser,
        text,
        schedule: make_schedule(50).unwrap(),
        period_frames: period,
        fps: 12.5,
    }
}

fn fast_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        steps: 5,
        seed,
        ..SamplerConfig::default()
    }
}

#[test]
fn repetition_is_periodic_in_the_period() {
    let freqs = FrequencySet::new(128, 30).unwrap();
    let x = random_params(128, 1);
    let s = repeat_phase(&x, &freqs, Representation::SinCos, 196.0, 588).unwrap();
    assert_eq!(s.len(), 588);
    let head = s.samples.slice(ndarray::s![..392, ..]);
    let tail = s.samples.slice(ndarray::s![196.., ..]);
    assert!(max_abs_diff(head, tail) < 1e-12);
}

#[test]
fn blend_identities() {
    let a = signal(40, 6, |t, c| (t as f64 * 0.3 + c as f64).sin());
    let b = signal(40, 6, |t, c| (t as f64 * 0.7 - c as f64).cos() + 2.0);
    let same = blend(&a, &a, 12).unwrap();
    assert!(max_abs_diff(same.samples.view(), a.samples.view()) < 1e-12);

    let (start, w) = (10, 12);
    let out = blend_at(&a, &b, start, w).unwrap();
    assert_eq!(out.samples.row(start), a.samples.row(start));
    assert!((&out.samples.row(start + w) - &b.samples.row(start + w)).iter().all(|d| d.abs() < 1e-12));
    let mid = (&a.samples.row(start + w / 2) + &b.samples.row(start + w / 2)) * 0.5;
    assert!((&out.samples.row(start + w / 2) - &mid).iter().all(|d| d.abs() < 1e-12));
    assert_eq!(out.samples.row(start - 1), a.samples.row(start - 1));
    assert_eq!(out.samples.row(start + w + 1), b.samples.row(start + w + 1));

    // weights mirror: with constant inputs blend(a, b)(t) = blend(b, a)(w - t)
    let ca = signal(30, 4, |_, c| c as f64);
    let cb = signal(30, 4, |_, c| 10.0 - c as f64);
    let ab = blend_at(&ca, &cb, 5, w).unwrap();
    let ba = blend_at(&cb, &ca, 5, w).unwrap();
    for t in 0..=w {
        let d = &ab.samples.row(5 + t) - &ba.samples.row(5 + w - t);
        assert!(d.iter().all(|v| v.abs() < 1e-12), "offset {t}");
    }
}

#[test]
fn blend_rejects_mismatched_channels_and_oversized_windows() {
    let a = signal(30, 6, |_, _| 0.0);
    let b = signal(30, 4, |_, _| 0.0);
    assert!(matches!(blend(&a, &b, 8), Err(Error::Structural(_))));
    assert!(matches!(blend(&a, &a, 30), Err(Error::Validation(_))));
    assert!(matches!(blend_at(&a, &a, 25, 8), Err(Error::Validation(_))));
}

#[test]
fn interpolation_keeps_the_original_samples() {
    let freqs = FrequencySet::new(128, 30).unwrap();
    let x = random_params(128, 2);
    for n in [2usize, 4] {
        let dense = interpolate(&x, &freqs, Representation::SinCos, 40.0, n, 60).unwrap();
        let base = repeat_phase(&x, &freqs, Representation::SinCos, 40.0, 60).unwrap();
        assert_eq!(dense.len(), 60 * n);
        let every = dense.samples.slice(ndarray::s![..;n, ..]);
        assert!(max_abs_diff(every, base.samples.view()) < 1e-12);
    }

    let stack = tiny_stack(20);
    let codec = &stack.codec;
    let x = random_params(codec.num_phases(), 3);
    let dense = interpolate(&x, &codec.freqs, codec.config.repr, 20.0, 3, 30).unwrap();
    let base = repeat_phase(&x, &codec.freqs, codec.config.repr, 20.0, 30).unwrap();
    let decoded = decode_interpolated(codec, &dense, 3).unwrap();
    let reference = codec.decode_features(&base).unwrap();
    assert_eq!(decoded.nrows(), 90);
    assert!(max_abs_diff(decoded.slice(ndarray::s![..;3, ..]), reference.view()) < 1e-9);
}

#[test]
fn repetition_mode_samples_once() {
    let stack = tiny_stack(196);
    let cfg = ComposeConfig {
        sampler: fast_sampler(4),
        ..ComposeConfig::default()
    };
    let out = generate_long(&stack, &[Some("a person walks forward".into())], 588, &cfg).unwrap();
    assert_eq!(out.log.diffusion_calls, 1);
    assert_eq!(out.clip.len(), 588);
    assert_eq!(out.plan.segments[0].repeat_count, 3);
    out.plan.validate().unwrap();
}

#[test]
fn generative_mode_conditions_on_the_decoded_end_pose() {
    let stack = tiny_stack(196);
    let cfg = ComposeConfig {
        mode: ComposeMode::Generative,
        sampler: fast_sampler(5),
        ..ComposeConfig::default()
    };
    let prompts = [Some("a person walks forward".to_string()), Some("a person jumps".to_string())];
    let out = generate_long(&stack, &prompts, 588, &cfg).unwrap();
    assert_eq!(out.log.diffusion_calls, 3);
    assert_eq!(out.clip.len(), 588);
    assert_eq!(out.plan.segments[1].prompt.as_deref(), Some("a person jumps"));
    assert!(out.log.condition_poses[0].is_none());
    for i in 1..3 {
        let prev = &out.plan.segments[i - 1].params;
        let sig = repeat_phase(prev, &stack.codec.freqs, stack.codec.config.repr, 196.0, 196).unwrap();
        let end = stack.codec.decode(&sig, stack.fps, None).unwrap().frames.pop().unwrap();
        assert_eq!(out.log.condition_poses[i].as_ref(), Some(&end));
    }

    // reproducible from the seed alone
    let again = generate_long(&stack, &prompts, 588, &cfg).unwrap();
    assert_eq!(again.clip, out.clip);
}

#[test]
fn generative_mode_trims_partial_periods() {
    let stack = tiny_stack(50);
    let cfg = ComposeConfig {
        mode: ComposeMode::Generative,
        sampler: fast_sampler(6),
        ..ComposeConfig::default()
    };
    let out = generate_long(&stack, &[None], 120, &cfg).unwrap();
    assert_eq!(out.log.diffusion_calls, 3);
    assert_eq!(out.clip.len(), 120);
    assert!(out.clip.frames.iter().all(|p| p.is_finite()));
}

#[test]
fn plans_must_cover_the_target() {
    let seg = PlannedSegment {
        params: PhaseParams::zeros(2),
        prompt: None,
        period_frames: 10,
        repeat_count: 2,
    };
    let plan = CompositionPlan {
        segments: vec![seg.clone()],
        target_frames: 21,
    };
    assert!(plan.validate().is_err());
    let plan = CompositionPlan {
        segments: vec![seg.clone(), PlannedSegment { repeat_count: 0, ..seg }],
        target_frames: 20,
    };
    assert!(plan.validate().is_err());
}

#[test]
fn dense_pure_sinusoid_matches_analytic_values() {
    let freqs = FrequencySet::from_vec(vec![3]).unwrap();
    let (a, p, o) = (1.3, 0.2, -0.4);
    let x = PhaseParams::new(vec![a], vec![p], vec![o]).unwrap();
    let (period, n) = (25.0, 4);
    let dense = interpolate(&x, &freqs, Representation::SinCos, period, n, 50).unwrap();
    for t in 0..200 {
        let k = t as f64 / (n as f64 * period);
        let th = std::f64::consts::TAU * (3.0 * k + p);
        assert!((dense.samples[[t, 0]] - (a * th.sin() + o)).abs() <= 1e-12);
        assert!((dense.samples[[t, 1]] - (a * th.cos() + o)).abs() <= 1e-12);
    }
    let same = interpolate(&x, &freqs, Representation::SinCos, period, 1, 50).unwrap();
    let base = repeat_phase(&x, &freqs, Representation::SinCos, period, 50).unwrap();
    assert_eq!(same.samples, base.samples);
}
