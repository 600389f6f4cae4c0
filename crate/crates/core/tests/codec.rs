use ndarray::Array2;
use phasegen_core::codec::{train_autoencoder, AeTrainConfig, CodecConfig, FkOp, PhaseAutoencoder, PhaseSignalOp};
use phasegen_core::motion::{
    forward_kinematics, synth_corpus, CorpusConfig, FeatureNormalizer, MotionClip, PoseFeatures, Skeleton, Split,
};
use phasegen_core::phase::{FramePlan, FrequencySet, Representation};
use phasegen_nn::gradcheck::check_params;
use phasegen_nn::{Mat, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn tiny_codec(repr: Representation) -> CodecConfig {
    CodecConfig {
        num_phases: 3,
        f_max: 4,
        repr,
        enc_frames: 4,
        enc_channels: 2,
        enc_kernel: 3,
        enc_hidden: 3,
        dec_hidden: 2,
        dec_kernel: 3,
    }
}

fn small_corpus(per_family: usize, seed: u64) -> phasegen_core::motion::MotionDataset {
    synth_corpus(&CorpusConfig::with_counts(per_family), seed).unwrap()
}

#[test]
fn phase_signal_op_gradients() {
    for repr in [Representation::SinCos, Representation::Sin] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let a = s.add("a", randn(2, 3, &mut rng));
        let p = s.add("p", randn(2, 3, &mut rng));
        let o = s.add("o", randn(2, 3, &mut rng));
        let plans = vec![FramePlan::clip(3, 8, 10).unwrap(), FramePlan::clip(2, 9, 10).unwrap()];
        let target = randn(20, 3 * repr.channels_per_phase(), &mut rng);
        let rep = check_params(&s, STEP, FLOOR, |t| {
            let op = PhaseSignalOp { freqs: vec![1, 2, 4], plans: plans.clone(), repr };
            let inputs = [t.param(a), t.param(p), t.param(o)];
            let y = t.custom(Box::new(op), &inputs);
            let tg = t.input(target.clone());
            t.mse(y, tg)
        });
        assert!(rep.max_rel_error < TOL, "{repr:?} {rep:?}");
    }
}

#[test]
fn fk_op_gradients() {
    let sk = Skeleton::humanoid();
    let d = PoseFeatures::dim(sk.num_joints());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let norm = FeatureNormalizer {
        mean: (0..d).map(|i| if i >= 3 && (i - 3) % 4 == 0 { 1.0 } else { 0.0 }).collect(),
        std: (0..d).map(|_| Uniform::new(0.2, 0.5).unwrap().sample(&mut rng)).collect(),
    };
    let mut s = ParamStore::new();
    let z = s.add("z", randn(3, d, &mut rng));
    let target = randn(3, 3 * sk.num_joints(), &mut rng);
    let rep = check_params(&s, STEP, FLOOR, |t| {
        let op = FkOp::new(&sk, &norm, 1.7);
        let zi = t.param(z);
        let y = t.custom(Box::new(op), &[zi]);
        let tg = t.input(target.clone());
        t.mse(y, tg)
    });
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn fk_op_matches_reference_kinematics() {
    let data = small_corpus(1, 5);
    let clip = &data.clips[0];
    let raw = PoseFeatures::from_clip(clip);
    let norm = FeatureNormalizer::fit([&raw], 0.05).unwrap();
    let z = norm.normalize(raw.view());
    let out = phasegen_nn::Function::forward(&FkOp::new(&clip.skeleton, &norm, 1.0), &[&z]);
    for (t, pose) in clip.frames.iter().enumerate() {
        let mut p = pose.clone();
        p.root_position = [0.0, p.root_position[1], 0.0];
        let reference = forward_kinematics(&clip.skeleton, &p).unwrap();
        for (j, r) in reference.iter().enumerate() {
            for c in 0..3 {
                assert!((out[[t, 3 * j + c]] - r[c]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn autoencoder_loss_gradients() {
    let data = small_corpus(1, 6);
    let clips: Vec<&MotionClip> = data.clips.iter().take(2).collect();
    let feats: Vec<Mat> = clips.iter().map(|c| PoseFeatures::from_clip(c)).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let short: Vec<MotionClip> = clips
        .iter()
        .map(|c| {
            let mut c = c.pad_or_trim(24).unwrap();
            c.t_s = Some(4);
            c.t_e = Some(18);
            c
        })
        .collect();
    for repr in [Representation::SinCos, Representation::Sin] {
        let model = PhaseAutoencoder::new(tiny_codec(repr), Skeleton::humanoid(), norm.clone(), 9).unwrap();
        let refs: Vec<&MotionClip> = short.iter().collect();
        let batch = model.make_batch(&refs).unwrap();
        let rep = check_params(&model.store, STEP, FLOOR, |t| model.loss_graph(t, &batch, 0.5));
        assert!(rep.max_rel_error < TOL, "{repr:?} {rep:?}");
    }
}

#[test]
fn training_reduces_loss_and_checkpoint_round_trips() {
    let data = small_corpus(3, 7);
    let codec = CodecConfig {
        num_phases: 8,
        f_max: 8,
        enc_hidden: 32,
        dec_hidden: 16,
        ..CodecConfig::default()
    };
    let cfg = AeTrainConfig {
        epochs: 15,
        batch_size: 4,
        lr_start: 3e-3,
        lr_end: 1e-3,
        ..AeTrainConfig::default()
    };
    let (model, log) = train_autoencoder(&data, &codec, &cfg).unwrap();
    assert_eq!(log.epoch_loss.len(), 15);
    assert!(log.epoch_loss[14] < 0.7 * log.epoch_loss[0], "{:?}", log.epoch_loss);

    let clip = data.iter_split(Split::Train).next().unwrap();
    let (t_s, t_e) = clip.segment().unwrap();
    let x = model.encode(clip, t_s, t_e).unwrap();
    assert!(x.is_canonical());
    assert_eq!(x.len(), 8);

    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path(), None).unwrap();
    let back = PhaseAutoencoder::load(dir.path()).unwrap();
    assert_eq!(back.encode(clip, t_s, t_e).unwrap(), x);
    let r1 = model.reconstruct(clip).unwrap();
    let r2 = back.reconstruct(clip).unwrap();
    assert_eq!(r1.frames, r2.frames);
    assert_eq!(r1.len(), clip.len());
}

#[test]
fn deterministic_training() {
    let data = small_corpus(2, 8);
    let codec = CodecConfig { num_phases: 4, f_max: 4, enc_hidden: 8, dec_hidden: 8, ..CodecConfig::default() };
    let cfg = AeTrainConfig { epochs: 2, batch_size: 3, ..AeTrainConfig::default() };
    let (a, la) = train_autoencoder(&data, &codec, &cfg).unwrap();
    let (b, lb) = train_autoencoder(&data, &codec, &cfg).unwrap();
    assert_eq!(la.epoch_loss, lb.epoch_loss);
    for ((_, _, x), (_, _, y)) in a.store.iter().zip(b.store.iter()) {
        assert_eq!(x, y);
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let model = PhaseAutoencoder::new(
        tiny_codec(Representation::SinCos),
        Skeleton::humanoid(),
        FeatureNormalizer::identity(71),
        0,
    )
    .unwrap();
    let bad = Array2::zeros((10, 5));
    assert!(model.encode_features(bad.view(), 2, 8).is_err());
    assert!(model.decode_normalized(Array2::zeros((10, 5)).view()).is_err());
    assert!(PhaseAutoencoder::new(
        tiny_codec(Representation::SinCos),
        Skeleton::humanoid(),
        FeatureNormalizer::identity(5),
        0
    )
    .is_err());
    let _ = FrequencySet::new(3, 4).unwrap();
}

#[test]
fn plain_pose_loss_matches_external_mse() {
    let data = small_corpus(1, 4);
    let feats: Vec<_> = data.clips.iter().map(PoseFeatures::from_clip).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let codec = PhaseAutoencoder::new(tiny_codec(Representation::SinCos), Skeleton::humanoid(), norm, 2).unwrap();
    let clips: Vec<&MotionClip> = data.clips.iter().collect();
    let batch = codec.make_batch(&clips).unwrap();
    let ours = codec.batch_loss(&batch, 0.0);
    let (mut sum, mut count) = (0.0, 0usize);
    for c in &clips {
        let (t_s, t_e) = c.segment().unwrap();
        let x = codec.encode(c, t_s, t_e).unwrap();
        let plan = FramePlan::clip(t_s, t_e, c.len()).unwrap();
        let sig = phasegen_core::phase::synthesize(&x, &codec.freqs, &plan, codec.config.repr).unwrap();
        let y = codec.decode_normalized(sig.samples.view()).unwrap();
        let target = codec.normalizer.normalize(PoseFeatures::from_clip(c).view());
        sum += (&y - &target).mapv(|v| v * v).sum();
        count += y.len();
    }
    assert!((ours - sum / count as f64).abs() < 1e-9);
    assert!(codec.batch_loss(&batch, 1.0) > ours);
}

#[test]
fn encoder_contract() {
    let data = small_corpus(1, 4);
    let feats: Vec<_> = data.clips.iter().map(PoseFeatures::from_clip).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let codec = PhaseAutoencoder::new(tiny_codec(Representation::SinCos), Skeleton::humanoid(), norm, 2).unwrap();
    for c in &data.clips {
        let (t_s, t_e) = c.segment().unwrap();
        let x = codec.encode(c, t_s, t_e).unwrap();
        assert_eq!((x.a.len(), x.p.len(), x.o.len()), (3, 3, 3));
        assert!(x.is_canonical());
        assert_eq!(codec.encode(c, t_s, t_e).unwrap(), x);
    }
}

#[test]
fn decoder_is_shift_equivariant_on_periodic_signals() {
    let data = small_corpus(1, 4);
    let feats: Vec<_> = data.clips.iter().map(PoseFeatures::from_clip).collect();
    let norm = FeatureNormalizer::fit(&feats, 0.05).unwrap();
    let cfg = CodecConfig {
        num_phases: 5,
        f_max: 6,
        enc_frames: 8,
        dec_hidden: 8,
        ..CodecConfig::default()
    };
    let codec = PhaseAutoencoder::new(cfg, Skeleton::humanoid(), norm, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let x = phasegen_core::phase::PhaseParams::new(
        (0..5).map(|_| u.sample(&mut rng)).collect(),
        (0..5).map(|_| u.sample(&mut rng)).collect(),
        (0..5).map(|_| u.sample(&mut rng) - 0.5).collect(),
    )
    .unwrap();
    let period = 12.0;
    let synth = |start: usize, len: usize| {
        let plan = FramePlan::periodic(period, len, start, 1);
        phasegen_core::phase::synthesize(&x, &codec.freqs, &plan, codec.config.repr).unwrap()
    };
    let r = codec.receptive_radius();
    let len = 60;
    let base = codec.decode_features(&synth(0, len)).unwrap();
    // one full period later the signal, and so every decoded frame, repeats
    let full = codec.decode_features(&synth(12, len)).unwrap();
    assert!((&base - &full).iter().all(|v| v.abs() <= 1e-6));
    // an arbitrary shift moves interior frames along with the input
    let d = 5;
    let moved = codec.decode_features(&synth(d, len)).unwrap();
    for t in r..len - d - r {
        for c in 0..base.ncols() {
            assert!((moved[[t, c]] - base[[t + d, c]]).abs() <= 1e-6);
        }
    }
    assert_eq!(base.nrows(), len);
}
