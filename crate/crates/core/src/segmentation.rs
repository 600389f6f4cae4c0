//! Primary-segment detection.
//!
//! Each frame is embedded as its rotations, root height and windowed joint
//! velocities. The segment `(t_s, t_e)` minimizes
//! `λ1 |d_ts - d_te| - λ2 (t_e - t_s) / t_T - λ3 |d_te - d_tT|` over every
//! admissible pair.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{forward_kinematics_unchecked, MotionClip, MotionDataset};

pub const DEFAULT_WINDOW: usize = 5;
/// Weight of the velocity block after normalization. Velocity windows at a
/// segment boundary straddle the lead-in or lead-out, so a heavy velocity
/// term masks the exact pose match there.
pub const DEFAULT_VELOCITY_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Minimum `t_e - t_s` in frames.
    pub min_len: usize,
}

impl Default for SegmentationWeights {
    fn default() -> Self {
        SegmentationWeights {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 0.5,
            min_len: 20,
        }
    }
}

impl SegmentationWeights {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3];
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || l.iter().all(|v| *v == 0.0) {
            return Err(Error::Config(
                "segmentation lambdas must be nonnegative with at least one positive".into(),
            ));
        }
        if self.min_len < 2 {
            return Err(Error::Config("min_len must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    /// 1-based inclusive frame numbers.
    pub t_s: usize,
    pub t_e: usize,
    pub score: f64,
}

/// Raw per-frame features; see [`FrameScaler`] for dataset normalization.
pub fn embed_frames(clip: &MotionClip, window: usize) -> Result<Array2<f64>> {
    let t_len = clip.len();
    if t_len <= window {
        return Err(Error::Validation(format!(
            "clip of {t_len} frames is too short for window {window}"
        )));
    }
    let j = clip.skeleton.num_joints();
    let positions: Vec<Vec<[f64; 3]>> = clip
        .frames
        .iter()
        .map(|p| forward_kinematics_unchecked(&clip.skeleton, p))
        .collect();
    let half = window / 2;
    let dim = 4 * j + 1 + 3 * j;
    let mut out = Array2::zeros((t_len, dim));
    for t in 0..t_len {
        let pose = &clip.frames[t];
        let mut row = out.row_mut(t);
        for (i, q) in pose.joint_rotations.iter().enumerate() {
            let q = q.canonical().to_array();
            for c in 0..4 {
                row[4 * i + c] = q[c];
            }
        }
        row[4 * j] = pose.root_position[1];
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(t_len - 1);
        let span = (hi - lo) as f64;
        for i in 0..j {
            for c in 0..3 {
                row[4 * j + 1 + 3 * i + c] = (positions[hi][i][c] - positions[lo][i][c]) / span;
            }
        }
    }
    Ok(out)
}

/// Per-dimension z-normalization of frame features across a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FrameScaler {
    pub fn fit(features: &[Array2<f64>]) -> Result<Self> {
        let dim = features
            .first()
            .map(|f| f.ncols())
            .ok_or_else(|| Error::Validation("no features to fit".into()))?;
        if features.iter().any(|f| f.ncols() != dim) {
            return Err(Error::Structural("frame feature widths differ".into()));
        }
        let n: usize = features.iter().map(|f| f.nrows()).sum();
        let mut mean = vec![0.0; dim];
        for f in features {
            for row in f.axis_iter(Axis(0)) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for f in features {
            for row in f.axis_iter(Axis(0)) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        // constant dimensions stay unscaled
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FrameScaler { mean, std })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (d, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[d]) / self.std[d];
            }
        }
        out
    }
}

/// Embed and z-normalize every clip with statistics shared across the set.
/// The velocity block is then scaled by `velocity_weight`.
pub fn embed_dataset(clips: &[&MotionClip], window: usize, velocity_weight: f64) -> Result<Vec<Array2<f64>>> {
    let raw = clips
        .iter()
        .map(|c| embed_frames(c, window))
        .collect::<Result<Vec<_>>>()?;
    let scaler = FrameScaler::fit(&raw)?;
    Ok(clips
        .iter()
        .zip(&raw)
        .map(|(c, f)| {
            let mut x = scaler.apply(f.view());
            let start = 4 * c.skeleton.num_joints() + 1;
            x.slice_mut(ndarray::s![.., start..]).mapv_inplace(|v| v * velocity_weight);
            x
        })
        .collect())
}

/// Pairwise Euclidean distances between frame features.
pub fn loss_matrix(features: ArrayView2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            m[[i, j]] = d;
            m[[j, i]] = d;
        }
    }
    m
}

fn check_len(t_len: usize, weights: &SegmentationWeights) -> Result<()> {
    weights.validate()?;
    if t_len < weights.min_len + 2 {
        return Err(Error::Validation(format!(
            "sequence of {t_len} frames is shorter than min_len + 2 = {}",
            weights.min_len + 2
        )));
    }
    Ok(())
}

fn score(dist: &Array2<f64>, w: &SegmentationWeights, t_s: usize, t_e: usize) -> f64 {
    let t_len = dist.nrows();
    w.lambda1 * dist[[t_s - 1, t_e - 1]] - w.lambda2 * (t_e - t_s) as f64 / t_len as f64
        - w.lambda3 * dist[[t_e - 1, t_len - 1]]
}

/// Lower score first; ties go to the longer segment, then the earlier start.
fn better(a: &SegmentAnnotation, b: &SegmentAnnotation) -> bool {
    if a.score != b.score {
        return a.score < b.score;
    }
    let (la, lb) = (a.t_e - a.t_s, b.t_e - b.t_s);
    if la != lb {
        return la > lb;
    }
    a.t_s < b.t_s
}

fn all_pairs(features: ArrayView2<f64>, weights: &SegmentationWeights) -> Result<Vec<SegmentAnnotation>> {
    let t_len = features.nrows();
    check_len(t_len, weights)?;
    let dist = loss_matrix(features);
    let mut out = Vec::new();
    for t_s in 1..=t_len {
        for t_e in t_s + weights.min_len..=t_len {
            out.push(SegmentAnnotation {
                t_s,
                t_e,
                score: score(&dist, weights, t_s, t_e),
            });
        }
    }
    Ok(out)
}

/// Exhaustive minimizer over all admissible `(t_s, t_e)`.
pub fn detect_segment(features: ArrayView2<f64>, weights: &SegmentationWeights) -> Result<SegmentAnnotation> {
    let pairs = all_pairs(features, weights)?;
    let mut best = pairs[0];
    for p in &pairs[1..] {
        if better(p, &best) {
            best = *p;
        }
    }
    Ok(best)
}

/// Up to `w` best pairs. A candidate is suppressed when both its start and
/// end lie within `suppress_radius` frames of an already kept pair.
pub fn top_w_segments_with_radius(
    features: ArrayView2<f64>,
    weights: &SegmentationWeights,
    w: usize,
    suppress_radius: usize,
) -> Result<Vec<SegmentAnnotation>> {
    if w == 0 {
        return Err(Error::Config("pool size W must be >= 1".into()));
    }
    let mut pairs = all_pairs(features, weights)?;
    pairs.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let mut kept: Vec<SegmentAnnotation> = Vec::with_capacity(w);
    for p in pairs {
        if kept.len() == w {
            break;
        }
        let near = kept.iter().any(|k| {
            k.t_s.abs_diff(p.t_s) <= suppress_radius && k.t_e.abs_diff(p.t_e) <= suppress_radius
        });
        if !near {
            kept.push(p);
        }
    }
    Ok(kept)
}

pub fn top_w_segments(
    features: ArrayView2<f64>,
    weights: &SegmentationWeights,
    w: usize,
) -> Result<Vec<SegmentAnnotation>> {
    top_w_segments_with_radius(features, weights, w, 2)
}

/// Augmentation pool of every clip in a dataset: up to `w` best segments
/// each, best first. Embedding statistics are shared across the dataset.
pub fn dataset_pools(
    dataset: &MotionDataset,
    weights: &SegmentationWeights,
    w: usize,
) -> Result<Vec<Vec<SegmentAnnotation>>> {
    weights.validate()?;
    let clips: Vec<&MotionClip> = dataset.clips.iter().collect();
    let embedded = embed_dataset(&clips, DEFAULT_WINDOW, DEFAULT_VELOCITY_WEIGHT)?;
    embedded.iter().map(|f| top_w_segments(f.view(), weights, w)).collect()
}

pub fn write_matrix_csv(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let mut s = String::new();
    for row in matrix.axis_iter(Axis(0)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(Error::io(path))
}

/// Heatmap, dark for small distances, bright for large.
pub fn write_matrix_png(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = matrix.dim();
    let max = matrix.iter().copied().fold(0.0f64, f64::max).max(1e-12);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for ((i, j), v) in matrix.indexed_iter() {
        let x = (v / max).clamp(0.0, 1.0);
        // black -> purple -> orange -> yellow
        let r = (255.0 * (1.5 * x).min(1.0)) as u8;
        let g = (255.0 * ((x - 0.4) / 0.6).clamp(0.0, 1.0)) as u8;
        let b = (255.0 * (0.6 * (std::f64::consts::PI * x).sin()).max(0.0)) as u8;
        img.put_pixel(j as u32, i as u32, image::Rgb([r, g, b]));
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}
