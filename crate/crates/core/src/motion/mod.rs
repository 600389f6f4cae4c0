//! Skeletons, poses and motion clips.
//!
//! Rotations are unit quaternions stored `(w, x, y, z)` with `w >= 0`. Joint
//! rotations are local to the parent joint; the root rotation is the global
//! orientation of the body.

mod features;
mod fk;
mod io;
mod synth;

pub use features::{FeatureNormalizer, PoseFeatures};
pub use fk::{forward_kinematics, forward_kinematics_unchecked, mpjpe};
pub use io::{clip_from_json, clip_to_json, load_clip, load_dataset, save_clip, save_dataset};
pub use synth::{synth_corpus, CorpusConfig, FamilyConfig, FAMILIES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (angle / 2.0).sin_cos();
        Quat::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation by `angles[0]` about x, then `angles[1]` about y, then
    /// `angles[2]` about z (applied to vectors in that order).
    pub fn from_euler_xyz(angles: Vec3) -> Self {
        let qx = Quat::from_axis_angle([1.0, 0.0, 0.0], angles[0]);
        let qy = Quat::from_axis_angle([0.0, 1.0, 0.0], angles[1]);
        let qz = Quat::from_axis_angle([0.0, 0.0, 1.0], angles[2]);
        qz.mul(qy).mul(qx)
    }

    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Unit length with `w >= 0`. A zero quaternion maps to identity.
    pub fn canonical(self) -> Quat {
        let n = self.norm();
        if !(n > 1e-12) {
            return Quat::IDENTITY;
        }
        let s = if self.w < 0.0 { -1.0 / n } else { 1.0 / n };
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Quat {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    /// Row-major rotation matrix of the normalized quaternion.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let n = self.norm();
        let (w, x, y, z) = (self.w / n, self.x / n, self.y / n, self.z / n);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    /// `None` for the root.
    pub parents: Vec<Option<usize>>,
    /// Rest-pose offset from the parent joint, meters.
    pub offsets: Vec<Vec3>,
}

impl Skeleton {
    pub fn new(joint_names: Vec<String>, parents: Vec<Option<usize>>, offsets: Vec<Vec3>) -> Result<Self> {
        let s = Skeleton {
            joint_names,
            parents,
            offsets,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joint_names.len();
        if n == 0 || self.parents.len() != n || self.offsets.len() != n {
            return Err(Error::Structural(format!(
                "skeleton field lengths disagree: {} names, {} parents, {} offsets",
                n,
                self.parents.len(),
                self.offsets.len()
            )));
        }
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 || self.parents[0].is_some() {
            return Err(Error::Structural(
                "skeleton needs exactly one root, at index 0".into(),
            ));
        }
        for (i, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => {
                    return Err(Error::Structural(format!(
                        "joint {i} parent must precede it"
                    )))
                }
            }
        }
        if self.offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite skeleton offset".into()));
        }
        Ok(())
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn bone_lengths(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .skip(1)
            .map(|o| (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt())
            .collect()
    }

    pub fn mean_bone_length(&self) -> f64 {
        let b = self.bone_lengths();
        b.iter().sum::<f64>() / b.len().max(1) as f64
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// A 17-joint, y-up humanoid used by the synthetic corpus.
    pub fn humanoid() -> Skeleton {
        let table: [(&str, Option<usize>, Vec3); 17] = [
            ("pelvis", None, [0.0, 0.0, 0.0]),
            ("spine", Some(0), [0.0, 0.12, 0.0]),
            ("chest", Some(1), [0.0, 0.18, 0.0]),
            ("neck", Some(2), [0.0, 0.2, 0.0]),
            ("head", Some(3), [0.0, 0.12, 0.0]),
            ("l_shoulder", Some(2), [0.18, 0.14, 0.0]),
            ("l_elbow", Some(5), [0.28, 0.0, 0.0]),
            ("l_wrist", Some(6), [0.25, 0.0, 0.0]),
            ("r_shoulder", Some(2), [-0.18, 0.14, 0.0]),
            ("r_elbow", Some(8), [-0.28, 0.0, 0.0]),
            ("r_wrist", Some(9), [-0.25, 0.0, 0.0]),
            ("l_hip", Some(0), [0.1, -0.06, 0.0]),
            ("l_knee", Some(11), [0.0, -0.42, 0.0]),
            ("l_ankle", Some(12), [0.0, -0.41, 0.0]),
            ("r_hip", Some(0), [-0.1, -0.06, 0.0]),
            ("r_knee", Some(14), [0.0, -0.42, 0.0]),
            ("r_ankle", Some(15), [0.0, -0.41, 0.0]),
        ];
        Skeleton {
            joint_names: table.iter().map(|s| s.0.to_string()).collect(),
            parents: table.iter().map(|s| s.1).collect(),
            offsets: table.iter().map(|s| s.2).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root_position: Vec3,
    pub joint_rotations: Vec<Quat>,
}

impl Pose {
    pub fn rest(skeleton: &Skeleton, root_position: Vec3) -> Pose {
        Pose {
            root_position,
            joint_rotations: vec![Quat::IDENTITY; skeleton.num_joints()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.root_position.iter().all(|v| v.is_finite())
            && self.joint_rotations.iter().all(|q| q.is_finite())
    }

    pub fn canonicalized(&self) -> Pose {
        Pose {
            root_position: self.root_position,
            joint_rotations: self.joint_rotations.iter().map(|q| q.canonical()).collect(),
        }
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.joint_rotations.len() != skeleton.num_joints() {
            return Err(Error::Structural(format!(
                "pose has {} rotations, skeleton has {} joints",
                self.joint_rotations.len(),
                skeleton.num_joints()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Validation("non-finite pose".into()));
        }
        if let Some(q) = self
            .joint_rotations
            .iter()
            .find(|q| (q.norm() - 1.0).abs() > 1e-6)
        {
            return Err(Error::Validation(format!(
                "rotation {q:?} is not a unit quaternion"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    pub fps: f64,
    pub frames: Vec<Pose>,
    pub text: Option<String>,
    /// Primary segment boundaries, 1-based inclusive frame numbers.
    pub t_s: Option<usize>,
    pub t_e: Option<usize>,
    /// Length before padding/trimming, when it differs from `frames.len()`.
    pub original_len: Option<usize>,
}

impl MotionClip {
    pub fn new(skeleton: Skeleton, fps: f64, frames: Vec<Pose>, text: Option<String>) -> Result<Self> {
        let clip = MotionClip {
            skeleton,
            fps,
            frames,
            text,
            t_s: None,
            t_e: None,
            original_len: None,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn segment(&self) -> Option<(usize, usize)> {
        self.t_s.zip(self.t_e)
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        if self.frames.len() < 2 {
            return Err(Error::Validation(format!(
                "clip needs at least 2 frames, has {}",
                self.frames.len()
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        for p in &self.frames {
            p.validate(&self.skeleton)?;
        }
        if let Some((s, e)) = self.segment() {
            if !(1 <= s && s < e && e <= self.frames.len()) {
                return Err(Error::Validation(format!(
                    "segment ({s}, {e}) outside 1..={}",
                    self.frames.len()
                )));
            }
        }
        Ok(())
    }

    /// Truncate at the end or hold the final frame until `target_len` frames.
    pub fn pad_or_trim(&self, target_len: usize) -> Result<MotionClip> {
        if target_len < 1 {
            return Err(Error::Validation("target length must be >= 1".into()));
        }
        let n = self.frames.len();
        let mut out = self.clone();
        if n == target_len {
            return Ok(out);
        }
        if n > target_len {
            out.frames.truncate(target_len);
        } else {
            let last = self.frames[n - 1].clone();
            out.frames.resize(target_len, last);
        }
        out.original_len = Some(self.original_len.unwrap_or(n));
        if let Some((s, e)) = out.segment() {
            if e > target_len || s >= e.min(target_len) {
                out.t_s = None;
                out.t_e = None;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionDataset {
    pub clips: Vec<MotionClip>,
    pub splits: Vec<Split>,
}

impl MotionDataset {
    pub fn new(clips: Vec<MotionClip>, splits: Vec<Split>) -> Result<Self> {
        let d = MotionDataset { clips, splits };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips.is_empty() {
            return Err(Error::Validation("dataset is empty".into()));
        }
        if self.clips.len() != self.splits.len() {
            return Err(Error::Structural("one split tag per clip required".into()));
        }
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut it = self.iter_split(split);
            if let Some(first) = it.next() {
                if it.any(|c| c.skeleton != first.skeleton) {
                    return Err(Error::Validation(format!(
                        "inconsistent skeletons within split {split:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = &MotionClip> {
        self.clips
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(c, _)| c)
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.clips.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.clips[0].skeleton
    }
}
