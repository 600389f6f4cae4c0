use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::{pose_vector, Condition, Denoiser};
use super::schedule::{make_schedule, NoiseSchedule};
use super::text::TextEncoder;
use super::{sample_params, SamplerConfig};
use crate::codec::PhaseAutoencoder;
use crate::error::{Error, Result};
use crate::motion::{MotionDataset, Pose, Split};
use crate::phase::PhaseParams;

pub const STACK_FILE: &str = "stack.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StackMeta {
    format_version: u32,
    text: TextEncoder,
    diffusion_steps: usize,
    period_frames: usize,
    fps: f64,
    #[serde(default)]
    training: Option<serde_json::Value>,
}

/// Everything needed to generate: codec, denoiser, text encoder and noise
/// schedule, plus the default period length in frames.
#[derive(Debug, Clone)]
pub struct ModelStack {
    pub codec: PhaseAutoencoder,
    pub denoiser: Denoiser,
    pub text: TextEncoder,
    pub schedule: NoiseSchedule,
    pub period_frames: usize,
    pub fps: f64,
}

/// Median `t_e - t_s` over annotated clips of a split.
pub fn median_period(dataset: &MotionDataset, split: Split) -> Result<usize> {
    let mut spans: Vec<usize> = dataset
        .iter_split(split)
        .filter_map(|c| c.segment().map(|(s, e)| e - s))
        .collect();
    if spans.is_empty() {
        return Err(Error::Validation("no annotated clips to take a period from".into()));
    }
    spans.sort_unstable();
    Ok(spans[spans.len() / 2])
}

impl ModelStack {
    pub fn condition(&self, prompt: Option<&str>, pose: Option<&Pose>) -> Condition {
        Condition {
            text: self.text.encode_opt(prompt),
            pose: pose.map(pose_vector),
        }
    }

    pub fn sample(&self, prompt: Option<&str>, pose: Option<&Pose>, config: &SamplerConfig) -> Result<PhaseParams> {
        let cond = self.condition(prompt, pose);
        sample_params(&self.denoiser, &self.schedule, &cond, config)
    }

    /// Directory layout: `codec/`, `denoiser/` and `stack.json`.
    pub fn save(&self, dir: &Path, training: Option<serde_json::Value>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        self.codec.save(&dir.join("codec"), None)?;
        self.denoiser.save(&dir.join("denoiser"))?;
        let meta = StackMeta {
            format_version: 1,
            text: self.text.clone(),
            diffusion_steps: self.schedule.steps(),
            period_frames: self.period_frames,
            fps: self.fps,
            training,
        };
        let path = dir.join(STACK_FILE);
        let s = serde_json::to_string_pretty(&meta).expect("stack meta serialization");
        std::fs::write(&path, s).map_err(Error::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(STACK_FILE);
        let s = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: StackMeta = serde_json::from_str(&s).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let codec = PhaseAutoencoder::load(&dir.join("codec"))?;
        let denoiser = Denoiser::load(&dir.join("denoiser"))?;
        if denoiser.config.num_tokens != codec.num_phases() {
            return Err(Error::Checkpoint(phasegen_nn::checkpoint::CheckpointError::Format {
                path: dir.to_path_buf(),
                reason: format!(
                    "denoiser has {} tokens but codec has {} phases",
                    denoiser.config.num_tokens,
                    codec.num_phases()
                ),
            }));
        }
        Ok(ModelStack {
            codec,
            denoiser,
            text: meta.text,
            schedule: make_schedule(meta.diffusion_steps)?,
            period_frames: meta.period_frames,
            fps: meta.fps,
        })
    }
}
