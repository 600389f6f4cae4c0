//! Per-frame network features.
//!
//! Layout per frame: `[root vx, root height, root vz, q_0 (w,x,y,z), ...,
//! q_{J-1}]`, so `D = 3 + 4J`. Horizontal root motion is stored as a
//! per-frame displacement, which makes the features invariant to where the
//! clip starts on the ground plane.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{MotionClip, Pose, Quat, Skeleton};
use crate::error::{Error, Result};

pub struct PoseFeatures;

impl PoseFeatures {
    pub fn dim(num_joints: usize) -> usize {
        3 + 4 * num_joints
    }

    pub fn from_poses(frames: &[Pose]) -> Array2<f64> {
        let t_len = frames.len();
        let j = frames.first().map_or(0, |f| f.joint_rotations.len());
        let mut out = Array2::zeros((t_len, Self::dim(j)));
        for (t, pose) in frames.iter().enumerate() {
            let (a, b) = match t {
                0 if t_len > 1 => (0, 1),
                0 => (0, 0),
                t => (t - 1, t),
            };
            let (pa, pb) = (frames[a].root_position, frames[b].root_position);
            let mut row = out.row_mut(t);
            row[0] = pb[0] - pa[0];
            row[1] = pose.root_position[1];
            row[2] = pb[2] - pa[2];
            for (i, q) in pose.joint_rotations.iter().enumerate() {
                let q = q.canonical().to_array();
                for c in 0..4 {
                    row[3 + 4 * i + c] = q[c];
                }
            }
        }
        out
    }

    pub fn from_clip(clip: &MotionClip) -> Array2<f64> {
        Self::from_poses(&clip.frames)
    }

    /// Poses from features. Root xz starts at the origin and integrates the
    /// stored displacements; quaternions are re-normalized.
    pub fn to_poses(features: ArrayView2<f64>, skeleton: &Skeleton) -> Result<Vec<Pose>> {
        let j = skeleton.num_joints();
        if features.ncols() != Self::dim(j) {
            return Err(Error::Structural(format!(
                "feature width {} does not match {} joints",
                features.ncols(),
                j
            )));
        }
        let mut x = 0.0;
        let mut z = 0.0;
        let mut poses = Vec::with_capacity(features.nrows());
        for (t, row) in features.axis_iter(Axis(0)).enumerate() {
            if t > 0 {
                x += row[0];
                z += row[2];
            }
            let rot = (0..j)
                .map(|i| {
                    let b = 3 + 4 * i;
                    Quat::new(row[b], row[b + 1], row[b + 2], row[b + 3]).canonical()
                })
                .collect();
            poses.push(Pose {
                root_position: [x, row[1], z],
                joint_rotations: rot,
            });
        }
        Ok(poses)
    }

    pub fn to_clip(
        features: ArrayView2<f64>,
        skeleton: &Skeleton,
        fps: f64,
        text: Option<String>,
    ) -> Result<MotionClip> {
        let frames = Self::to_poses(features, skeleton)?;
        MotionClip::new(skeleton.clone(), fps, frames, text)
    }
}

/// Per-dimension z-normalization fitted on training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    /// Dimensions whose spread is below `std_floor` are scaled by the floor
    /// instead, so near-constant channels are not blown up.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a Array2<f64>>, std_floor: f64) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for f in features {
            if sum.is_empty() {
                sum = vec![0.0; f.ncols()];
                sq = vec![0.0; f.ncols()];
            } else if f.ncols() != sum.len() {
                return Err(Error::Structural("feature widths differ".into()));
            }
            for row in f.axis_iter(Axis(0)) {
                for (d, v) in row.iter().enumerate() {
                    sum[d] += v;
                    sq[d] += v * v;
                }
            }
            n += f.nrows();
        }
        if n == 0 {
            return Err(Error::Validation("no frames to fit normalizer".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / nf - m * m).max(0.0)).sqrt().max(std_floor))
            .collect();
        Ok(FeatureNormalizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        FeatureNormalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (d, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[d]) / self.std[d];
            }
        }
        out
    }

    pub fn denormalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (d, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[d] + self.mean[d];
            }
        }
        out
    }
}
