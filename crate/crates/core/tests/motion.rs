use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use phasegen_core::motion::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    Quat::new(v[0] / n, v[1] / n, v[2] / n, v[3] / n).canonical()
}

fn random_pose(sk: &Skeleton, rng: &mut ChaCha8Rng) -> Pose {
    Pose {
        root_position: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        joint_rotations: (0..sk.num_joints()).map(|_| random_quat(rng)).collect(),
    }
}

/// Composes explicit 4x4 homogeneous transforms from the root down.
fn oracle_fk(sk: &Skeleton, pose: &Pose) -> Vec<[f64; 3]> {
    let mut world: Vec<Matrix4<f64>> = Vec::new();
    for (i, q) in pose.joint_rotations.iter().enumerate() {
        let [w, x, y, z] = q.to_array();
        let rot = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_homogeneous();
        let local = match sk.parents[i] {
            None => {
                let r = pose.root_position;
                Matrix4::new_translation(&Vector3::new(r[0], r[1], r[2])) * rot
            }
            Some(p) => {
                let o = sk.offsets[i];
                world[p] * Matrix4::new_translation(&Vector3::new(o[0], o[1], o[2])) * rot
            }
        };
        world.push(local);
    }
    world
        .iter()
        .map(|m| {
            let p = m * Vector4::new(0.0, 0.0, 0.0, 1.0);
            [p[0], p[1], p[2]]
        })
        .collect()
}

fn chain() -> Skeleton {
    Skeleton::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![None, Some(0), Some(1)],
        vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    )
    .unwrap()
}

#[test]
fn chain_examples() {
    let sk = chain();
    let p = forward_kinematics(&sk, &Pose::rest(&sk, [0.0; 3])).unwrap();
    assert_eq!(p, vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    let mut pose = Pose::rest(&sk, [0.0; 3]);
    pose.joint_rotations[0] = Quat::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
    let p = forward_kinematics(&sk, &pose).unwrap();
    assert!(p[1][0].abs() < 1e-9 && (p[1][1] - 1.0).abs() < 1e-9 && p[1][2].abs() < 1e-9);
}

#[test]
fn fk_errors() {
    let sk = chain();
    let mut pose = Pose::rest(&sk, [0.0; 3]);
    pose.joint_rotations.pop();
    assert!(matches!(forward_kinematics(&sk, &pose), Err(phasegen_core::Error::Structural(_))));
    let mut pose = Pose::rest(&sk, [0.0; 3]);
    pose.root_position[1] = f64::NAN;
    assert!(matches!(forward_kinematics(&sk, &pose), Err(phasegen_core::Error::Validation(_))));
}

#[test]
fn fk_matches_homogeneous_transform_oracle() {
    let sk = Skeleton::humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let pose = random_pose(&sk, &mut rng);
        let ours = forward_kinematics(&sk, &pose).unwrap();
        for (a, b) in ours.iter().zip(oracle_fk(&sk, &pose)) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1e-9);
            }
        }
    }
}

proptest! {
    #[test]
    fn fk_preserves_bone_lengths(seed in 0u64..10_000) {
        let sk = Skeleton::humanoid();
        let pose = random_pose(&sk, &mut ChaCha8Rng::seed_from_u64(seed));
        let pos = forward_kinematics(&sk, &pose).unwrap();
        for (i, parent) in sk.parents.iter().enumerate() {
            if let Some(p) = parent {
                let d = (0..3).map(|c| (pos[i][c] - pos[*p][c]).powi(2)).sum::<f64>().sqrt();
                let o = sk.offsets[i].iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((d - o).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn clip_json_is_a_bijection(seed in 0u64..1000, n in 2usize..6, fps in 1.0f64..120.0) {
        let sk = Skeleton::humanoid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n).map(|_| random_pose(&sk, &mut rng)).collect();
        let mut clip = MotionClip::new(sk, fps, frames, Some(format!("prompt {seed}"))).unwrap();
        if seed % 2 == 0 {
            clip.t_s = Some(1);
            clip.t_e = Some(n);
        }
        let text = clip_to_json(&clip);
        let back = clip_from_json(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &clip);
        prop_assert_eq!(clip_to_json(&back), text);
    }
}

#[test]
fn pad_or_trim_rules() {
    let sk = Skeleton::humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let make = |n: usize, rng: &mut ChaCha8Rng| {
        MotionClip::new(sk.clone(), 12.5, (0..n).map(|_| random_pose(&sk, rng)).collect(), None).unwrap()
    };
    let c = make(196, &mut rng);
    assert_eq!(c.pad_or_trim(196).unwrap(), c);
    let short = make(100, &mut rng);
    let padded = short.pad_or_trim(196).unwrap();
    assert_eq!(padded.len(), 196);
    assert!(padded.frames[100..].iter().all(|f| *f == short.frames[99]));
    assert_eq!(padded.original_len, Some(100));
    let long = make(300, &mut rng);
    let cut = long.pad_or_trim(196).unwrap();
    assert_eq!(cut.frames[..], long.frames[..196]);
}

#[test]
fn corpus_is_seeded_counted_and_round_trips() {
    let cfg = CorpusConfig::default();
    let a = synth_corpus(&cfg, 7).unwrap();
    let b = synth_corpus(&cfg, 7).unwrap();
    assert_eq!(a.len(), 200);
    let dir = tempfile::tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    save_dataset(&a, &da).unwrap();
    save_dataset(&b, &db).unwrap();
    for i in [0, 57, 199] {
        let f = format!("clip_{i:05}.json");
        assert_eq!(std::fs::read(da.join(&f)).unwrap(), std::fs::read(db.join(&f)).unwrap());
    }
    let back = load_dataset(&da).unwrap();
    assert_eq!(back, a);
    assert!(back.clips.iter().all(|c| c.fps == 12.5));
    assert!(back.clips.iter().all(|c| c.segment().is_some() && c.text.is_some()));
    assert_ne!(synth_corpus(&cfg, 8).unwrap(), a);
}

#[test]
fn synthetic_segments_repeat_after_one_period() {
    let cfg = CorpusConfig {
        families: vec![FamilyConfig {
            name: "wave right arm".into(),
            count: 5,
        }],
        segment_frames: (24, 24),
        ..CorpusConfig::default()
    };
    let data = synth_corpus(&cfg, 1).unwrap();
    let arm = data.skeleton().joint_index("r_shoulder").unwrap();
    for clip in &data.clips {
        let (t_s, t_e) = clip.segment().unwrap();
        assert_eq!(t_e - t_s, 24);
        let (a, b) = (&clip.frames[t_s - 1], &clip.frames[t_e - 1]);
        for (qa, qb) in a.joint_rotations.iter().zip(&b.joint_rotations) {
            for (x, y) in qa.to_array().iter().zip(qb.to_array()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
        assert!((a.root_position[1] - b.root_position[1]).abs() <= 1e-9);
        // the arm actually moves inside the segment
        let mid = &clip.frames[t_s - 1 + 12];
        assert!((mid.joint_rotations[arm].to_array()[0] - a.joint_rotations[arm].to_array()[0]).abs() > 1e-3);
    }
}

#[test]
fn unknown_family_is_rejected() {
    let cfg = CorpusConfig {
        families: vec![FamilyConfig {
            name: "swim".into(),
            count: 1,
        }],
        ..CorpusConfig::default()
    };
    assert!(matches!(synth_corpus(&cfg, 0), Err(phasegen_core::Error::Config(_))));
}

#[test]
fn missing_fps_names_the_field() {
    let clip = synth_corpus(&CorpusConfig::with_counts(1), 0).unwrap().clips[0].clone();
    let mut v: serde_json::Value = serde_json::from_str(&clip_to_json(&clip)).unwrap();
    v.as_object_mut().unwrap().remove("fps");
    let err = clip_from_json(&v.to_string(), std::path::Path::new("x.json")).unwrap_err();
    assert!(err.to_string().contains("fps"), "{err}");
}
