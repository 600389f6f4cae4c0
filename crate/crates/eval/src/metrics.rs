use ndarray::{s, Array2, ArrayView2, Axis};
use phasegen_core::codec::PhaseAutoencoder;
use phasegen_core::composer::repeat_phase;
use phasegen_core::motion::{mpjpe, MotionClip, MotionDataset, PoseFeatures, Split};
use phasegen_core::phase::{synthesize, FramePlan};
use phasegen_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub fn mean_square(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Least-squares line `y = slope x + intercept` and its R².
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconScore {
    /// Normalized-feature MSE between clips and their reconstructions.
    pub mse: f64,
    /// Mean per-joint position error in skeleton units.
    pub mpjpe: f64,
    /// `mpjpe` as a fraction of the mean bone length.
    pub mpjpe_ratio: f64,
    pub clips: usize,
}

/// Encode each clip's annotated segment, decode the re-assembled signal and
/// compare with the clip.
pub fn heldout_recon(codec: &PhaseAutoencoder, dataset: &MotionDataset, split: Split) -> Result<ReconScore> {
    let mut mse = 0.0;
    let mut err = 0.0;
    let mut n = 0usize;
    for clip in dataset.iter_split(split) {
        let (t_s, t_e) = clip
            .segment()
            .ok_or_else(|| Error::Validation("held-out clip without segment annotation".into()))?;
        let feats = PoseFeatures::from_clip(clip);
        let x = codec.encode_features(feats.view(), t_s, t_e)?;
        let plan = FramePlan::clip(t_s, t_e, clip.len())?;
        let signal = synthesize(&x, &codec.freqs, &plan, codec.config.repr)?;
        let out = codec.decode_normalized(signal.samples.view())?;
        mse += mean_square(out.view(), codec.normalizer.normalize(feats.view()).view());
        let raw = codec.normalizer.denormalize(out.view());
        let poses = PoseFeatures::to_poses(raw.view(), &codec.skeleton)?;
        err += mpjpe(&codec.skeleton, &clip.frames, &poses)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("split has no clips".into()));
    }
    let mpjpe = err / n as f64;
    Ok(ReconScore {
        mse: mse / n as f64,
        mpjpe,
        mpjpe_ratio: mpjpe / codec.skeleton.mean_bone_length(),
        clips: n,
    })
}

/// Autoencoder round trip of a (generated) periodic clip: encode frames
/// `1..=period + 1`, repeat the phases over the clip length, decode and
/// return the normalized-feature MSE against the clip.
pub fn roundtrip_error(codec: &PhaseAutoencoder, clip: &MotionClip, period: usize) -> Result<f64> {
    if period < 2 || period + 1 > clip.len() {
        return Err(Error::Validation(format!(
            "period {period} does not fit in a clip of {} frames",
            clip.len()
        )));
    }
    let feats = PoseFeatures::from_clip(clip);
    let x = codec.encode_features(feats.view(), 1, period + 1)?;
    let signal = repeat_phase(&x, &codec.freqs, codec.config.repr, period as f64, clip.len())?;
    let out = codec.decode_normalized(signal.samples.view())?;
    Ok(mean_square(out.view(), codec.normalizer.normalize(feats.view()).view()))
}

/// Phase-invariant summary of a motion: per-dimension mean and standard
/// deviation of its normalized features.
pub fn descriptor(codec: &PhaseAutoencoder, features: ArrayView2<f64>) -> Vec<f64> {
    let x = codec.normalizer.normalize(features);
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x.std_axis(Axis(0), 0.0);
    mean.iter().chain(std.iter()).copied().collect()
}

/// Descriptor of a clip's annotated periodic section (the whole clip when it
/// has no annotation).
pub fn clip_descriptor(codec: &PhaseAutoencoder, clip: &MotionClip) -> Vec<f64> {
    let f = PoseFeatures::from_clip(clip);
    let f: Array2<f64> = match clip.segment() {
        Some((t_s, t_e)) => f.slice(s![t_s - 1..t_e, ..]).to_owned(),
        None => f,
    };
    descriptor(codec, f.view())
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
