//! Long-horizon composition in phase space: repetition, conditioned
//! transitions, signal blending and temporal up-sampling.

use std::time::Instant;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::codec::PhaseAutoencoder;
use crate::diffusion::{ModelStack, SamplerConfig};
use crate::error::{Error, Result};
use crate::motion::{MotionClip, Pose, PoseFeatures};
use crate::phase::{synthesize, FramePlan, FrameTag, FrequencySet, PhaseParams, PhaseSignal, SegmentTag};
use crate::rng;

/// Frames on each seam crossfaded in generative mode.
pub const SEAM_WINDOW: usize = 8;

/// Periodic plan over frames `first..first + len` of a segment starting at
/// frame 0 with the given period. `first` may be negative.
fn periodic_window(period: f64, first: i64, len: usize) -> FramePlan {
    FramePlan {
        frames: (0..len as i64)
            .map(|t| FrameTag {
                tag: SegmentTag::Periodic,
                k: (first + t) as f64 / period,
            })
            .collect(),
    }
}

fn check_period(period: f64) -> Result<()> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Validation(format!("period must be positive, got {period}")));
    }
    Ok(())
}

/// Periodic section of `params` repeated over `target` frames: frame `t`
/// samples `k = t / period`, so the signal repeats every `period` frames.
pub fn repeat_phase(
    params: &PhaseParams,
    freqs: &FrequencySet,
    repr: crate::phase::Representation,
    period: f64,
    target: usize,
) -> Result<PhaseSignal> {
    check_period(period)?;
    if target == 0 {
        return Err(Error::Validation("target length must be positive".into()));
    }
    synthesize(params, freqs, &FramePlan::periodic(period, target, 0, 1), repr)
}

/// Raised-cosine weight of the second signal at window offset `t`.
pub fn blend_weight(t: usize, window: usize) -> f64 {
    (1.0 - (std::f64::consts::PI * t as f64 / window as f64).cos()) / 2.0
}

/// Crossfade from `a` to `b` on a shared timeline. Frames before `start`
/// come from `a`, frames after `start + window` from `b`; frame `start + t`
/// in between mixes them with weight `blend_weight(t, window)` on `b`.
/// The output has `b`'s length.
pub fn blend_at(a: &PhaseSignal, b: &PhaseSignal, start: usize, window: usize) -> Result<PhaseSignal> {
    if a.channels() != b.channels() || a.repr != b.repr {
        return Err(Error::Structural(format!(
            "cannot blend {} channels ({:?}) with {} channels ({:?})",
            a.channels(),
            a.repr,
            b.channels(),
            b.repr
        )));
    }
    if window == 0 {
        return Err(Error::Validation("blend window must be at least one frame".into()));
    }
    let shared = a.len().min(b.len());
    if start + window >= shared {
        return Err(Error::Validation(format!(
            "blend window [{start}, {}] does not fit in {shared} shared frames",
            start + window
        )));
    }
    let mut samples = b.samples.clone();
    let mut plan = b.plan.clone();
    samples
        .slice_mut(s![..start, ..])
        .assign(&a.samples.slice(s![..start, ..]));
    plan.frames[..start].copy_from_slice(&a.plan.frames[..start]);
    for t in 0..=window {
        let w = blend_weight(t, window);
        let row = &a.samples.row(start + t) * (1.0 - w) + &b.samples.row(start + t) * w;
        samples.row_mut(start + t).assign(&row);
    }
    Ok(PhaseSignal {
        samples,
        plan,
        repr: b.repr,
    })
}

/// [`blend_at`] with the window centred in the shared range.
pub fn blend(a: &PhaseSignal, b: &PhaseSignal, window: usize) -> Result<PhaseSignal> {
    let shared = a.len().min(b.len());
    if window >= shared {
        return Err(Error::Validation(format!(
            "blend window {window} needs fewer frames than the {shared} shared"
        )));
    }
    blend_at(a, b, (shared - 1 - window) / 2, window)
}

/// `factor` times denser periodic signal: frame `t` samples
/// `k = t / (factor * period)` for `target * factor` frames.
pub fn interpolate(
    params: &PhaseParams,
    freqs: &FrequencySet,
    repr: crate::phase::Representation,
    period: f64,
    factor: usize,
    target: usize,
) -> Result<PhaseSignal> {
    check_period(period)?;
    if factor == 0 || target == 0 {
        return Err(Error::Validation("factor and target length must be positive".into()));
    }
    synthesize(params, freqs, &FramePlan::periodic(period, target * factor, 0, factor), repr)
}

/// Decode a dense signal from [`interpolate`]: every offset sub-signal
/// (rows `r, r + factor, ...`) is decoded on its own and the frames are
/// interleaved again, so the decoder always sees the frame spacing it was
/// trained on.
pub fn decode_interpolated(codec: &PhaseAutoencoder, signal: &PhaseSignal, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 || signal.len() % factor != 0 {
        return Err(Error::Validation(format!(
            "signal of {} frames is not a multiple of factor {factor}",
            signal.len()
        )));
    }
    let mut out = Array2::zeros((signal.len(), codec.pose_dim()));
    for r in 0..factor {
        let sub = signal.samples.slice(s![r..;factor, ..]).to_owned();
        let norm = codec.decode_normalized(sub.view())?;
        let raw = codec.normalizer.denormalize(norm.view());
        out.slice_mut(s![r..;factor, ..]).assign(&raw);
    }
    Ok(out)
}

/// Parameters of the next segment, conditioned on the pose the motion
/// currently ends in.
pub fn transition(
    stack: &ModelStack,
    end_pose: &Pose,
    prompt: Option<&str>,
    sampler: &SamplerConfig,
) -> Result<PhaseParams> {
    stack.sample(prompt, Some(end_pose), sampler)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeMode {
    /// Sample once and repeat the periodic section.
    #[default]
    Repetition,
    /// Sample one segment per period, each conditioned on the previous end pose.
    Generative,
}

impl ComposeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "repetition" => Ok(ComposeMode::Repetition),
            "generative" => Ok(ComposeMode::Generative),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected repetition or generative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSegment {
    pub params: PhaseParams,
    pub prompt: Option<String>,
    pub period_frames: usize,
    pub repeat_count: usize,
}

/// Ordered segments whose planned frames cover the target length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub segments: Vec<PlannedSegment>,
    pub target_frames: usize,
}

impl CompositionPlan {
    pub fn planned_frames(&self) -> usize {
        self.segments.iter().map(|s| s.period_frames * s.repeat_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.iter().any(|s| s.repeat_count == 0 || s.period_frames == 0) {
            return Err(Error::Validation("every segment needs a positive period and repeat count".into()));
        }
        if self.planned_frames() < self.target_frames {
            return Err(Error::Validation(format!(
                "plan covers {} frames, target is {}",
                self.planned_frames(),
                self.target_frames
            )));
        }
        Ok(())
    }
}

/// What happened during one long-horizon generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub diffusion_calls: usize,
    /// Pose each sampler call was conditioned on, `None` for the first.
    #[serde(skip)]
    pub condition_poses: Vec<Option<Pose>>,
    pub sample_seconds: f64,
    pub decode_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ComposeConfig {
    pub mode: ComposeMode,
    /// Overrides the stack's default period.
    pub period_frames: Option<usize>,
    pub sampler: SamplerConfig,
    pub seam_window: usize,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        ComposeConfig {
            mode: ComposeMode::Repetition,
            period_frames: None,
            sampler: SamplerConfig::default(),
            seam_window: SEAM_WINDOW,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LongMotion {
    pub clip: MotionClip,
    pub signal: PhaseSignal,
    pub plan: CompositionPlan,
    pub log: RunLog,
}

/// Sampler config for the `i`-th call of a run; keeps calls independent
/// while staying reproducible from the one user seed.
fn call_config(base: &SamplerConfig, i: usize) -> SamplerConfig {
    if i == 0 {
        return base.clone();
    }
    use rand::Rng;
    let seed = rng::indexed(base.seed, rng::SAMPLER, i as u64).random();
    SamplerConfig { seed, ..base.clone() }
}

/// Generate `target` frames from a list of prompts. Repetition mode uses the
/// first prompt and one diffusion call; generative mode cycles through the
/// prompts, one call per period, and crossfades each seam.
pub fn generate_long(
    stack: &ModelStack,
    prompts: &[Option<String>],
    target: usize,
    config: &ComposeConfig,
) -> Result<LongMotion> {
    if prompts.is_empty() {
        return Err(Error::Validation("need at least one prompt (use None for unconditional)".into()));
    }
    if target == 0 {
        return Err(Error::Validation("target length must be positive".into()));
    }
    let period = config.period_frames.unwrap_or(stack.period_frames);
    if period < 2 {
        return Err(Error::Validation(format!("period of {period} frames is too short")));
    }
    let codec = &stack.codec;
    let (freqs, repr) = (&codec.freqs, codec.config.repr);
    let mut log = RunLog::default();
    let segments = match config.mode {
        ComposeMode::Repetition => 1,
        ComposeMode::Generative => target.div_ceil(period),
    };
    let mut planned = Vec::with_capacity(segments);
    let mut end_pose: Option<Pose> = None;
    for i in 0..segments {
        let prompt = prompts[i % prompts.len()].clone();
        let clock = Instant::now();
        let params = match &end_pose {
            None => stack.sample(prompt.as_deref(), None, &call_config(&config.sampler, i))?,
            Some(p) => transition(stack, p, prompt.as_deref(), &call_config(&config.sampler, i))?,
        };
        log.sample_seconds += clock.elapsed().as_secs_f64();
        log.diffusion_calls += 1;
        log.condition_poses.push(end_pose.take());
        if config.mode == ComposeMode::Generative && i + 1 < segments {
            let clock = Instant::now();
            let sig = repeat_phase(&params, freqs, repr, period as f64, period)?;
            let clip = codec.decode(&sig, stack.fps, None)?;
            end_pose = clip.frames.last().cloned();
            log.decode_seconds += clock.elapsed().as_secs_f64();
        }
        planned.push(PlannedSegment {
            params,
            prompt,
            period_frames: period,
            repeat_count: match config.mode {
                ComposeMode::Repetition => target.div_ceil(period),
                ComposeMode::Generative => 1,
            },
        });
    }
    let plan = CompositionPlan {
        segments: planned,
        target_frames: target,
    };
    plan.validate()?;

    let clock = Instant::now();
    let signal = match config.mode {
        ComposeMode::Repetition => repeat_phase(&plan.segments[0].params, freqs, repr, period as f64, target)?,
        ComposeMode::Generative => stitch(&plan, freqs, repr, config.seam_window)?,
    };
    let features = codec.decode_features(&signal)?;
    let clip = PoseFeatures::to_clip(features.view(), &codec.skeleton, stack.fps, prompts[0].clone())?;
    log.decode_seconds += clock.elapsed().as_secs_f64();
    Ok(LongMotion {
        clip,
        signal,
        plan,
        log,
    })
}

/// Concatenate one-period segments, crossfading `window` frames centred on
/// every seam, then trim to the target. Each segment is evaluated past its
/// own ends, which is well defined since its signal is periodic.
fn stitch(
    plan: &CompositionPlan,
    freqs: &FrequencySet,
    repr: crate::phase::Representation,
    window: usize,
) -> Result<PhaseSignal> {
    let target = plan.target_frames;
    let mut pieces = Vec::with_capacity(plan.segments.len());
    let mut offset = 0usize;
    for seg in &plan.segments {
        let p = seg.period_frames as f64;
        let len = seg.period_frames * seg.repeat_count;
        pieces.push(synthesize(&seg.params, freqs, &periodic_window(p, 0, len), repr)?);
        offset += len;
    }
    let channels = pieces[0].channels();
    let mut samples = Array2::zeros((offset, channels));
    let mut frames = Vec::with_capacity(offset);
    let mut at = 0;
    for piece in &pieces {
        samples.slice_mut(s![at..at + piece.len(), ..]).assign(&piece.samples);
        frames.extend_from_slice(&piece.plan.frames);
        at += piece.len();
    }
    let half = window / 2;
    let mut seam = 0usize;
    for (i, seg) in plan.segments.iter().enumerate().skip(1) {
        let prev = &plan.segments[i - 1];
        seam += prev.period_frames * prev.repeat_count;
        if window == 0 || seam < half {
            continue;
        }
        let first = seam - half;
        let a = synthesize(
            &prev.params,
            freqs,
            &periodic_window(
                prev.period_frames as f64,
                first as i64 + (prev.period_frames * prev.repeat_count) as i64 - seam as i64,
                window + 1,
            ),
            repr,
        )?;
        let b = synthesize(
            &seg.params,
            freqs,
            &periodic_window(seg.period_frames as f64, -(half as i64), window + 1),
            repr,
        )?;
        let mixed = blend_at(&a, &b, 0, window)?;
        let end = (first + window + 1).min(offset);
        samples
            .slice_mut(s![first..end, ..])
            .assign(&mixed.samples.slice(s![..end - first, ..]));
    }
    let keep = target.min(offset);
    Ok(PhaseSignal {
        samples: samples.slice(s![..keep, ..]).to_owned(),
        plan: FramePlan {
            frames: frames[..keep].to_vec(),
        },
        repr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Representation;

    fn params() -> (PhaseParams, FrequencySet) {
        let freqs = FrequencySet::from_vec(vec![1, 2, 5]).unwrap();
        let p = PhaseParams::new(vec![1.0, 0.5, 0.2], vec![0.1, 0.7, 0.3], vec![0.0, -0.2, 0.4]).unwrap();
        (p, freqs)
    }

    #[test]
    fn weights_run_from_zero_to_one() {
        assert_eq!(blend_weight(0, 8), 0.0);
        assert_eq!(blend_weight(8, 8), 1.0);
        assert!((blend_weight(4, 8) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn repeat_is_periodic() {
        let (p, f) = params();
        let s = repeat_phase(&p, &f, Representation::SinCos, 10.0, 40).unwrap();
        for t in 0..30 {
            for c in 0..s.channels() {
                assert!((s.samples[[t, c]] - s.samples[[t + 10, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stitched_plan_is_trimmed() {
        let (p, f) = params();
        let seg = |q: &PhaseParams| PlannedSegment {
            params: q.clone(),
            prompt: None,
            period_frames: 10,
            repeat_count: 1,
        };
        let plan = CompositionPlan {
            segments: vec![seg(&p), seg(&p), seg(&p)],
            target_frames: 25,
        };
        let s = stitch(&plan, &f, Representation::SinCos, 4).unwrap();
        assert_eq!(s.len(), 25);
        // identical neighbours make the crossfade invisible
        let r = repeat_phase(&p, &f, Representation::SinCos, 10.0, 25).unwrap();
        for t in 0..25 {
            for c in 0..s.channels() {
                assert!((s.samples[[t, c]] - r.samples[[t, c]]).abs() < 1e-12, "frame {t}");
            }
        }
    }
}
