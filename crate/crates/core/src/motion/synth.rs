//! Procedural motion corpus.
//!
//! Every clip is a ramp-in, one primary cycle and a ramp-out. Inside the
//! primary segment `[t_s, t_e]` each generator channel (root velocity, root
//! height, root yaw, joint Euler angles) is a sum of harmonics of the segment
//! length, so the segment is exactly periodic with period `t_e - t_s`. Ramps
//! move each channel affinely between the family's neutral stance and the
//! segment boundary values.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MotionClip, MotionDataset, Pose, Quat, Skeleton, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Motion families the generator knows, with their prompt templates.
pub const FAMILIES: &[(&str, &[&str])] = &[
    (
        "walk forward",
        &[
            "a person walks forward",
            "someone walks straight ahead",
            "the person is walking forward",
        ],
    ),
    (
        "wave right arm",
        &[
            "a person waves the right arm",
            "someone waves with the right hand",
            "the person raises the right arm and waves",
        ],
    ),
    (
        "turn in place",
        &[
            "a person turns in place",
            "someone turns left and right",
            "the person twists around in place",
        ],
    ),
    (
        "jump",
        &[
            "a person jumps up and down",
            "someone jumps in place",
            "the person is jumping",
        ],
    ),
    (
        "run forward",
        &["a person runs forward", "someone jogs straight ahead"],
    ),
    (
        "squat",
        &["a person does squats", "someone squats down and stands up"],
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub families: Vec<FamilyConfig>,
    pub fps: f64,
    /// Frames per clip.
    pub frames: usize,
    /// Inclusive range for the primary segment length `t_e - t_s`.
    pub segment_frames: (usize, usize),
    /// Inclusive range for the number of ramp-in frames before `t_s`.
    pub ramp_in_frames: (usize, usize),
    /// Within each family, clip `i` goes to test when `i % holdout_every ==
    /// holdout_every - 1` and to val when it is `holdout_every - 2`.
    pub holdout_every: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            families: FAMILIES[..4]
                .iter()
                .map(|(n, _)| FamilyConfig {
                    name: n.to_string(),
                    count: 50,
                })
                .collect(),
            fps: 12.5,
            frames: 64,
            segment_frames: (32, 44),
            ramp_in_frames: (5, 10),
            holdout_every: 10,
        }
    }
}

impl CorpusConfig {
    pub fn with_counts(count: usize) -> Self {
        let mut c = CorpusConfig::default();
        for f in &mut c.families {
            f.count = count;
        }
        c
    }

    fn validate(&self) -> Result<()> {
        for f in &self.families {
            if !FAMILIES.iter().any(|(n, _)| *n == f.name) {
                return Err(Error::Config(format!("unknown motion family {:?}", f.name)));
            }
        }
        if self.families.iter().all(|f| f.count == 0) {
            return Err(Error::Config("corpus has no clips".into()));
        }
        let (smin, smax) = self.segment_frames;
        let (rmin, rmax) = self.ramp_in_frames;
        if smin < 4 || smin > smax || rmin < 1 || rmin > rmax {
            return Err(Error::Config("invalid segment/ramp ranges".into()));
        }
        if self.frames < rmax + smax + 5 {
            return Err(Error::Config(format!(
                "{} frames cannot hold ramp {rmax} + segment {smax} + ramp-out",
                self.frames
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        if self.holdout_every < 3 {
            return Err(Error::Config("holdout_every must be >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    RootHeight,
    RootVelZ,
    RootYaw,
    Joint(usize, usize),
}

#[derive(Debug, Clone)]
struct Channel {
    target: Target,
    rest: f64,
    base: f64,
    /// (harmonic, amplitude, phase in turns)
    harmonics: Vec<(u32, f64, f64)>,
}

impl Channel {
    fn periodic(&self, k: f64) -> f64 {
        self.base
            + self
                .harmonics
                .iter()
                .map(|&(h, a, ph)| a * (TAU * (h as f64 * k + ph)).sin())
                .sum::<f64>()
    }
}

// joint indices in `Skeleton::humanoid`
const SPINE: usize = 1;
const CHEST: usize = 2;
const HEAD: usize = 4;
const L_SH: usize = 5;
const L_EL: usize = 6;
const L_WR: usize = 7;
const R_SH: usize = 8;
const R_EL: usize = 9;
const R_WR: usize = 10;
const L_HIP: usize = 11;
const L_KNEE: usize = 12;
const L_ANK: usize = 13;
const R_HIP: usize = 14;
const R_KNEE: usize = 15;
const R_ANK: usize = 16;
const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

const STAND_HEIGHT: f64 = 0.9;
const ARM_DOWN: f64 = 1.3;

struct Builder {
    channels: Vec<Channel>,
    gain: f64,
}

impl Builder {
    fn new(gain: f64) -> Self {
        let mut b = Builder {
            channels: Vec::new(),
            gain,
        };
        // neutral stance: arms hanging
        b.joint(L_SH, Z, -ARM_DOWN, -ARM_DOWN, &[]);
        b.joint(R_SH, Z, ARM_DOWN, ARM_DOWN, &[]);
        b.root(Target::RootHeight, STAND_HEIGHT, STAND_HEIGHT, &[]);
        b
    }

    fn add(&mut self, target: Target, rest: f64, base: f64, h: &[(u32, f64, f64)]) {
        let harmonics = h.iter().map(|&(k, a, p)| (k, a * self.gain, p)).collect();
        let ch = Channel {
            target,
            rest,
            base,
            harmonics,
        };
        let key = |t: &Target| match *t {
            Target::RootHeight => (1, 0, 0),
            Target::RootVelZ => (2, 0, 0),
            Target::RootYaw => (3, 0, 0),
            Target::Joint(j, a) => (4, j, a),
        };
        if let Some(existing) = self
            .channels
            .iter_mut()
            .find(|c| key(&c.target) == key(&target))
        {
            *existing = ch;
        } else {
            self.channels.push(ch);
        }
    }

    fn joint(&mut self, joint: usize, axis: usize, rest: f64, base: f64, h: &[(u32, f64, f64)]) {
        self.add(Target::Joint(joint, axis), rest, base, h);
    }

    fn root(&mut self, target: Target, rest: f64, base: f64, h: &[(u32, f64, f64)]) {
        self.add(target, rest, base, h);
    }
}

fn family_channels<R: Rng>(family: &str, rng: &mut R) -> Vec<Channel> {
    let gain = rng.random_range(0.85..1.15);
    let mut b = Builder::new(gain);
    match family {
        "walk forward" | "run forward" => {
            // one stride (left + right step) per cycle
            let run = family == "run forward";
            let (hip, knee, speed) = if run {
                (0.6, 0.55, rng.random_range(0.10..0.13))
            } else {
                (0.42, 0.35, rng.random_range(0.05..0.075))
            };
            b.root(Target::RootVelZ, 0.0, speed, &[(2, 0.1 * speed, 0.0)]);
            b.root(
                Target::RootHeight,
                STAND_HEIGHT,
                STAND_HEIGHT - 0.02,
                &[(2, 0.015, 0.25)],
            );
            b.joint(L_HIP, X, 0.0, 0.0, &[(1, hip, 0.0)]);
            b.joint(R_HIP, X, 0.0, 0.0, &[(1, hip, 0.5)]);
            b.joint(L_KNEE, X, 0.0, knee, &[(1, knee, 0.25), (2, 0.08, 0.1), (10, 0.04, 0.3)]);
            b.joint(R_KNEE, X, 0.0, knee, &[(1, knee, 0.75), (2, 0.08, 0.6), (10, 0.04, 0.8)]);
            b.joint(L_ANK, X, 0.0, 0.0, &[(1, 0.2, 0.1), (3, 0.06, 0.0), (10, 0.03, 0.2)]);
            b.joint(R_ANK, X, 0.0, 0.0, &[(1, 0.2, 0.6), (3, 0.06, 0.5), (10, 0.03, 0.7)]);
            b.joint(L_SH, X, 0.0, 0.0, &[(1, 0.35, 0.5)]);
            b.joint(R_SH, X, 0.0, 0.0, &[(1, 0.35, 0.0)]);
            b.joint(L_EL, X, 0.0, -0.3, &[(1, 0.1, 0.5)]);
            b.joint(R_EL, X, 0.0, -0.3, &[(1, 0.1, 0.0)]);
            b.joint(SPINE, Y, 0.0, 0.0, &[(1, 0.08, 0.0)]);
            b.joint(HEAD, Y, 0.0, 0.0, &[(2, 0.05, 0.0)]);
            b.joint(L_WR, Z, 0.0, 0.0, &[(12, 0.04, 0.0)]);
        }
        "wave right arm" => {
            b.joint(R_SH, Z, ARM_DOWN, -1.1, &[(1, 0.3, 0.3), (3, 0.2, 0.0)]);
            b.joint(R_EL, Z, 0.0, -0.5, &[(1, 0.3, 0.1), (3, 0.35, 0.1), (9, 0.12, 0.2)]);
            b.joint(R_WR, Z, 0.0, 0.0, &[(9, 0.15, 0.0), (12, 0.05, 0.3)]);
            b.joint(SPINE, Z, 0.0, 0.0, &[(1, 0.15, 0.0)]);
            b.joint(CHEST, Y, 0.0, 0.0, &[(1, 0.15, 0.2)]);
            b.joint(HEAD, X, 0.0, 0.0, &[(1, 0.2, 0.4)]);
            b.joint(L_SH, X, 0.0, 0.0, &[(1, 0.15, 0.0)]);
            b.root(Target::RootHeight, STAND_HEIGHT, STAND_HEIGHT, &[(2, 0.005, 0.0)]);
        }
        "turn in place" => {
            b.root(Target::RootYaw, 0.0, 0.0, &[(1, 0.7, 0.0), (2, 0.1, 0.3)]);
            b.joint(L_HIP, X, 0.0, 0.0, &[(2, 0.2, 0.0)]);
            b.joint(R_HIP, X, 0.0, 0.0, &[(2, 0.2, 0.5)]);
            b.joint(L_KNEE, X, 0.0, 0.25, &[(2, 0.25, 0.25)]);
            b.joint(R_KNEE, X, 0.0, 0.25, &[(2, 0.25, 0.75)]);
            b.joint(L_SH, X, 0.0, 0.0, &[(1, 0.3, 0.25)]);
            b.joint(R_SH, X, 0.0, 0.0, &[(1, 0.3, 0.75)]);
            b.joint(SPINE, Y, 0.0, 0.0, &[(1, 0.25, 0.25), (11, 0.03, 0.0)]);
            b.joint(R_WR, Z, 0.0, 0.0, &[(12, 0.04, 0.0)]);
            b.joint(L_ANK, X, 0.0, 0.0, &[(2, 0.1, 0.0), (10, 0.03, 0.0)]);
        }
        "jump" => {
            // one hop per cycle
            b.root(
                Target::RootHeight,
                STAND_HEIGHT,
                STAND_HEIGHT + 0.1,
                &[(1, 0.15, 0.75), (2, 0.03, 0.0), (10, 0.008, 0.0)],
            );
            b.joint(L_KNEE, X, 0.0, 0.35, &[(1, 0.35, 0.25)]);
            b.joint(R_KNEE, X, 0.0, 0.35, &[(1, 0.35, 0.25)]);
            b.joint(L_HIP, X, 0.0, -0.3, &[(1, 0.3, 0.75)]);
            b.joint(R_HIP, X, 0.0, -0.3, &[(1, 0.3, 0.75)]);
            b.joint(L_SH, X, 0.0, -0.6, &[(1, 0.6, 0.0), (3, 0.05, 0.0), (9, 0.05, 0.1)]);
            b.joint(R_SH, X, 0.0, -0.6, &[(1, 0.6, 0.0), (3, 0.05, 0.5)]);
            b.joint(CHEST, X, 0.0, 0.0, &[(1, 0.15, 0.5)]);
            b.joint(L_ANK, X, 0.0, 0.0, &[(1, 0.2, 0.0), (10, 0.03, 0.0)]);
            b.joint(R_ANK, X, 0.0, 0.0, &[(1, 0.2, 0.0), (10, 0.03, 0.5)]);
            b.joint(HEAD, X, 0.0, 0.0, &[(2, 0.1, 0.0)]);
        }
        "squat" => {
            b.root(
                Target::RootHeight,
                STAND_HEIGHT,
                STAND_HEIGHT - 0.15,
                &[(1, 0.15, 0.25)],
            );
            b.joint(L_KNEE, X, 0.0, 0.7, &[(1, 0.7, 0.75)]);
            b.joint(R_KNEE, X, 0.0, 0.7, &[(1, 0.7, 0.75)]);
            b.joint(L_HIP, X, 0.0, -0.6, &[(1, 0.6, 0.25)]);
            b.joint(R_HIP, X, 0.0, -0.6, &[(1, 0.6, 0.25)]);
            b.joint(L_SH, X, 0.0, -0.7, &[(1, 0.7, 0.0)]);
            b.joint(R_SH, X, 0.0, -0.7, &[(1, 0.7, 0.0)]);
            b.joint(CHEST, X, 0.0, -0.2, &[(1, 0.2, 0.5), (2, 0.05, 0.0), (10, 0.03, 0.0)]);
            b.joint(HEAD, X, 0.0, 0.0, &[(1, 0.2, 0.0)]);
            b.joint(L_WR, Z, 0.0, 0.0, &[(12, 0.04, 0.0)]);
        }
        other => unreachable!("family {other} validated earlier"),
    }
    b.channels
}

struct ClipPlan {
    t_s: usize,
    t_e: usize,
    frames: usize,
    phase: f64,
}

impl ClipPlan {
    /// Channel value at 1-based frame `t`.
    fn value(&self, ch: &Channel, t: usize) -> f64 {
        let period = (self.t_e - self.t_s) as f64;
        let at = |t: usize| ch.periodic((t - self.t_s) as f64 / period + self.phase);
        if t < self.t_s {
            let w = (t - 1) as f64 / (self.t_s - 1) as f64;
            ch.rest + w * (at(self.t_s) - ch.rest)
        } else if t <= self.t_e {
            at(t)
        } else {
            let w = (t - self.t_e) as f64 / (self.frames - self.t_e) as f64;
            let end = at(self.t_e);
            end + w * (ch.rest - end)
        }
    }
}

fn build_clip<R: Rng>(
    family: &str,
    prompts: &[&str],
    config: &CorpusConfig,
    skeleton: &Skeleton,
    rng: &mut R,
) -> MotionClip {
    let channels = family_channels(family, rng);
    let seg = rng.random_range(config.segment_frames.0..=config.segment_frames.1);
    let ramp = rng.random_range(config.ramp_in_frames.0..=config.ramp_in_frames.1);
    let plan = ClipPlan {
        t_s: ramp + 1,
        t_e: ramp + 1 + seg,
        frames: config.frames,
        phase: rng.random_range(0.0..1.0),
    };
    let prompt = prompts[rng.random_range(0..prompts.len())].to_string();

    let n = skeleton.num_joints();
    let mut root = [0.0, STAND_HEIGHT, 0.0];
    let mut frames = Vec::with_capacity(config.frames);
    for t in 1..=config.frames {
        let mut angles = vec![[0.0f64; 3]; n];
        let (mut vz, mut yaw) = (0.0, 0.0);
        for ch in &channels {
            let v = plan.value(ch, t);
            match ch.target {
                Target::RootVelZ => vz = v,
                Target::RootHeight => root[1] = v,
                Target::RootYaw => yaw = v,
                Target::Joint(j, a) => angles[j][a] = v,
            }
        }
        if t > 1 {
            root[2] += vz;
        }
        let mut rotations: Vec<Quat> = angles
            .iter()
            .map(|a| Quat::from_euler_xyz(*a).canonical())
            .collect();
        rotations[0] = Quat::from_axis_angle([0.0, 1.0, 0.0], yaw)
            .mul(rotations[0])
            .canonical();
        frames.push(Pose {
            root_position: root,
            joint_rotations: rotations,
        });
    }
    MotionClip {
        skeleton: skeleton.clone(),
        fps: config.fps,
        frames,
        text: Some(prompt),
        t_s: Some(plan.t_s),
        t_e: Some(plan.t_e),
        original_len: None,
    }
}

/// Generate a labelled corpus. Ground-truth segment boundaries are stored in
/// each clip's `t_s`/`t_e`. Clip `i` depends only on `(seed, i)`.
pub fn synth_corpus(config: &CorpusConfig, seed: u64) -> Result<MotionDataset> {
    config.validate()?;
    let skeleton = Skeleton::humanoid();
    let mut clips = Vec::new();
    let mut splits = Vec::new();
    let mut index = 0u64;
    for fam in &config.families {
        let prompts = FAMILIES
            .iter()
            .find(|(n, _)| *n == fam.name)
            .map(|(_, p)| *p)
            .expect("validated");
        for i in 0..fam.count {
            let mut r = rng::indexed(seed, rng::CORPUS, index);
            index += 1;
            clips.push(build_clip(&fam.name, prompts, config, &skeleton, &mut r));
            let h = config.holdout_every;
            splits.push(match i % h {
                x if x == h - 1 => Split::Test,
                x if x == h - 2 => Split::Val,
                _ => Split::Train,
            });
        }
    }
    MotionDataset::new(clips, splits)
}
