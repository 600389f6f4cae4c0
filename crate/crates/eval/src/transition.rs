use ndarray::{concatenate, s, Axis};
use phasegen_core::composer::repeat_phase;
use phasegen_core::diffusion::{sample_batch, Condition, ModelStack, SamplerConfig};
use phasegen_core::motion::{mpjpe, MotionClip, MotionDataset, Pose, PoseFeatures, Split};
use phasegen_core::phase::{synthesize, FramePlan, PhaseParams};
use phasegen_core::{rng, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::report::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseCondition {
    EndPose,
    RandomPose,
    ZeroMask,
}

impl PoseCondition {
    pub const ALL: [PoseCondition; 3] = [PoseCondition::EndPose, PoseCondition::RandomPose, PoseCondition::ZeroMask];

    pub fn key(self) -> &'static str {
        match self {
            PoseCondition::EndPose => "end_pose",
            PoseCondition::RandomPose => "random_pose",
            PoseCondition::ZeroMask => "zero_mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionConfig {
    /// Frames kept on each side of the switch.
    pub half_window: usize,
    /// Frames with `|index| <= near` count as near the switch.
    pub near: usize,
    /// Frames with `|index| > far` count as far from it.
    pub far: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        TransitionConfig {
            half_window: 40,
            near: 4,
            far: 30,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

/// `count` ordered pairs of distinct prompts, drawn from the eval stream.
pub fn prompt_pairs(prompts: &[String], count: usize, seed: u64) -> Vec<(String, String)> {
    let mut uniq: Vec<String> = prompts.to_vec();
    uniq.sort();
    uniq.dedup();
    let mut r = rng::indexed(seed, rng::EVAL, 1);
    let mut out = Vec::with_capacity(count);
    while out.len() < count && uniq.len() > 1 {
        let a = r.random_range(0..uniq.len());
        let b = r.random_range(0..uniq.len() - 1);
        let b = if b >= a { b + 1 } else { b };
        out.push((uniq[a].clone(), uniq[b].clone()));
    }
    out
}

fn params_rows(stack: &ModelStack, conds: &[Condition], sampler: &SamplerConfig) -> Result<Vec<PhaseParams>> {
    let raw = sample_batch(&stack.denoiser, &stack.schedule, conds, sampler)?;
    raw.rows()
        .into_iter()
        .map(|r| Ok(PhaseParams::from_vec(&r.to_vec())?.canonical()))
        .collect()
}

/// Decoded raw features of `frames` frames of a repeated segment.
fn decode_repeat(stack: &ModelStack, params: &PhaseParams, frames: usize) -> Result<ndarray::Array2<f64>> {
    let codec = &stack.codec;
    let sig = repeat_phase(params, &codec.freqs, codec.config.repr, stack.period_frames as f64, frames)?;
    codec.decode_features(&sig)
}

/// Local plausibility curve of one joined motion. Frame `c` is scored by
/// treating the `period + 1` frames centred on it as one cycle, passing
/// them through the autoencoder and averaging the per-joint error over the
/// window. Periodic stretches reconstruct well; a jump inside the window
/// does not.
fn local_errors(stack: &ModelStack, clip: &MotionClip, centres: std::ops::Range<usize>) -> Result<Vec<f64>> {
    let codec = &stack.codec;
    let half = stack.period_frames / 2;
    let len = 2 * half + 1;
    let feats = PoseFeatures::from_clip(clip);
    let mut out = Vec::with_capacity(centres.len());
    for c in centres {
        let w = feats.slice(s![c - half..c - half + len, ..]);
        let x = codec.encode_features(w, 1, len)?;
        let plan = FramePlan::clip(1, len, len)?;
        let signal = synthesize(&x, &codec.freqs, &plan, codec.config.repr)?;
        let rec = PoseFeatures::to_poses(codec.decode_features(&signal)?.view(), &codec.skeleton)?;
        out.push(mpjpe(&codec.skeleton, &clip.frames[c - half..c - half + len], &rec)?);
    }
    Ok(out)
}

/// For each prompt pair: sample and decode a first segment, then sample the
/// second one under each pose condition, join the two in feature space and
/// measure how well the frozen autoencoder reproduces the frames around the
/// switch. Curves are indexed `-half_window..half_window`, index 0 being
/// the first frame of the second segment; distances are mean per-joint L2.
pub fn transition_study(
    stack: &ModelStack,
    dataset: &MotionDataset,
    pairs: &[(String, String)],
    config: &TransitionConfig,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Validation("transition study needs prompt pairs".into()));
    }
    let h = config.half_window;
    let period = stack.period_frames;
    // each side needs h frames plus half a period of context
    let side = h + period / 2 + 1;
    let first_len = side.div_ceil(period) * period;
    let mut sampler = config.sampler.clone();
    sampler.seed = config.seed;

    let first_conds: Vec<Condition> = pairs.iter().map(|(a, _)| stack.condition(Some(a), None)).collect();
    let first = params_rows(stack, &first_conds, &sampler)?;
    let mut first_feats = Vec::with_capacity(pairs.len());
    let mut end_poses = Vec::with_capacity(pairs.len());
    for x in &first {
        let f = decode_repeat(stack, x, first_len)?;
        let clip = PoseFeatures::to_clip(f.view(), &stack.codec.skeleton, stack.fps, None)?;
        end_poses.push(clip.frames.last().cloned().expect("non-empty"));
        first_feats.push(f);
    }

    let train: Vec<&MotionClip> = dataset.iter_split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Validation("no training clips to draw random poses from".into()));
    }
    let mut r = rng::indexed(config.seed, rng::EVAL, 2);
    let random_poses: Vec<Pose> = (0..pairs.len())
        .map(|_| {
            let c = train[r.random_range(0..train.len())];
            c.frames[r.random_range(0..c.len())].clone()
        })
        .collect();

    let mut report = MetricReport::new("transition-study", config.seed, config);
    report.notes.push("distances are mean per-joint L2 with each frame's root centred".into());
    report.set("pairs", pairs.len() as f64);
    report.set("period_frames", period as f64);
    let mut second_sampler = sampler.clone();
    second_sampler.seed = config.seed.wrapping_add(1);
    for cond in PoseCondition::ALL {
        let conds: Vec<Condition> = pairs
            .iter()
            .enumerate()
            .map(|(i, (_, b))| {
                let pose = match cond {
                    PoseCondition::EndPose => Some(&end_poses[i]),
                    PoseCondition::RandomPose => Some(&random_poses[i]),
                    PoseCondition::ZeroMask => None,
                };
                stack.condition(Some(b), pose)
            })
            .collect();
        let second = params_rows(stack, &conds, &second_sampler)?;
        let mut errs = Vec::with_capacity(pairs.len());
        let mut jump = 0.0;
        for (f1, x2) in first_feats.iter().zip(&second) {
            let f2 = decode_repeat(stack, x2, side)?;
            let joined = concatenate(Axis(0), &[f1.slice(s![first_len - side.., ..]), f2.view()]).expect("same width");
            let clip = PoseFeatures::to_clip(joined.view(), &stack.codec.skeleton, stack.fps, None)?;
            let skel = &stack.codec.skeleton;
            jump += mpjpe(skel, &clip.frames[side - 1..side], &clip.frames[side..side + 1])? / pairs.len() as f64;
            errs.push(local_errors(stack, &clip, side - h..side + h)?);
        }
        report.set(&format!("seam_jump_{}", cond.key()), jump);
        let mut curve = vec![0.0; 2 * h];
        for e in &errs {
            for (c, v) in curve.iter_mut().zip(e) {
                *c += v / errs.len() as f64;
            }
        }
        let index = |i: usize| i as i64 - h as i64;
        let avg = |pred: &dyn Fn(i64) -> bool| {
            let v: Vec<f64> = (0..2 * h).filter(|&i| pred(index(i))).map(|i| curve[i]).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let near = config.near as i64;
        let far = config.far as i64;
        report.set(&format!("near_{}", cond.key()), avg(&|f| f.abs() <= near));
        report.set(&format!("far_{}", cond.key()), avg(&|f| f.abs() > far));
        report.curves.insert(cond.key().to_string(), curve);
    }
    let m = |k: &str| report.metric(k).expect("set above");
    let far: Vec<f64> = PoseCondition::ALL.iter().map(|c| m(&format!("far_{}", c.key()))).collect();
    let lo = far.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = far.iter().copied().fold(0.0, f64::max);
    let ordered = m("near_end_pose") < m("near_random_pose") && m("near_end_pose") < m("near_zero_mask");
    report.set("far_spread", (hi - lo) / lo);
    report.set("ordering_holds", f64::from(u8::from(ordered)));
    Ok(report)
}
