use std::time::Instant;

use ndarray::{concatenate, Axis};
use phasegen_nn::{Adam, Function, LrSchedule, Mat, Tape, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CodecConfig, FkOp, PhaseAutoencoder};
use crate::error::{Error, Result};
use crate::motion::{FeatureNormalizer, MotionClip, MotionDataset, PoseFeatures, Split};
use crate::phase::FramePlan;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeTrainConfig {
    pub epochs: usize,
    /// Clamped to the number of training clips.
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Weight of the forward-kinematics position term.
    pub lambda_fk: f64,
    pub seed: u64,
    /// Spread floor for feature normalization.
    pub std_floor: f64,
}

/// Tuned for a few hundred clips on one CPU core: smaller batches and a
/// higher learning rate than [`AeTrainConfig::large_corpus`], which would
/// take only two optimizer steps per epoch here.
impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            epochs: 200,
            batch_size: 16,
            lr_start: 1e-3,
            lr_end: 1e-5,
            lambda_fk: 1.0,
            seed: 0,
            std_floor: 0.05,
        }
    }
}

impl AeTrainConfig {
    /// Settings for corpora of tens of thousands of clips.
    pub fn large_corpus() -> Self {
        AeTrainConfig {
            batch_size: 128,
            lr_start: 1e-4,
            lr_end: 1e-6,
            ..AeTrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
    pub seconds: f64,
}

/// Stacked tensors for one batch of equal-length annotated clips.
#[derive(Debug, Clone)]
pub struct AeBatch {
    /// `(B * enc_frames) x D`, normalized.
    pub enc_input: Mat,
    /// `(B * T) x D`, normalized.
    pub target: Mat,
    /// `(B * T) x 3J` positions of the target.
    pub target_pos: Mat,
    pub plans: Vec<FramePlan>,
    pub batch: usize,
    pub frames: usize,
}

struct ClipTensors {
    enc: Mat,
    target: Mat,
    pos: Mat,
    plan: FramePlan,
}

impl PhaseAutoencoder {
    fn clip_tensors(&self, clip: &MotionClip) -> Result<ClipTensors> {
        self.check_skeleton(clip)?;
        let (t_s, t_e) = clip
            .segment()
            .ok_or_else(|| Error::Validation("training clip has no segment annotation".into()))?;
        let raw = PoseFeatures::from_clip(clip);
        let enc = self.encoder_input(raw.view(), t_s, t_e)?;
        let target = self.normalizer.normalize(raw.view());
        let fk = FkOp::new(&self.skeleton, &self.normalizer, 1.0 / self.skeleton.mean_bone_length());
        let pos = fk.forward(&[&target]);
        Ok(ClipTensors {
            enc,
            target,
            pos,
            plan: FramePlan::clip(t_s, t_e, clip.len())?,
        })
    }

    fn stack(parts: &[&ClipTensors]) -> Result<AeBatch> {
        let frames = parts[0].target.nrows();
        if parts.iter().any(|p| p.target.nrows() != frames) {
            return Err(Error::Validation(
                "clips in a batch must share one length; pad or trim them first".into(),
            ));
        }
        let cat = |f: &dyn Fn(&ClipTensors) -> &Mat| {
            let views: Vec<_> = parts.iter().map(|p| f(p).view()).collect();
            concatenate(Axis(0), &views).expect("equal widths")
        };
        Ok(AeBatch {
            enc_input: cat(&|p| &p.enc),
            target: cat(&|p| &p.target),
            target_pos: cat(&|p| &p.pos),
            plans: parts.iter().map(|p| p.plan.clone()).collect(),
            batch: parts.len(),
            frames,
        })
    }

    pub fn make_batch(&self, clips: &[&MotionClip]) -> Result<AeBatch> {
        if clips.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let t = clips.iter().map(|c| self.clip_tensors(c)).collect::<Result<Vec<_>>>()?;
        Self::stack(&t.iter().collect::<Vec<_>>())
    }

    /// Decoded normalized features of a batch: encode, synthesize, decode.
    pub fn forward_graph(&self, tape: &mut Tape, batch: &AeBatch) -> Var {
        let x = tape.input(batch.enc_input.clone());
        let (a, p, o) = self.encode_graph(tape, x, batch.batch);
        let s = self.signal_graph(tape, a, p, o, batch.plans.clone());
        self.decode_graph(tape, s, batch.frames, false)
    }

    /// Pose-feature MSE plus `lambda_fk` times joint-position MSE.
    pub fn loss_graph(&self, tape: &mut Tape, batch: &AeBatch, lambda_fk: f64) -> Var {
        let y = self.forward_graph(tape, batch);
        let target = tape.input(batch.target.clone());
        let pose = tape.mse(y, target);
        if lambda_fk == 0.0 {
            return pose;
        }
        let pos = self.fk_graph(tape, y);
        let target_pos = tape.input(batch.target_pos.clone());
        let fk = tape.mse(pos, target_pos);
        let fk = tape.scale(fk, lambda_fk);
        tape.add(pose, fk)
    }

    pub fn batch_loss(&self, batch: &AeBatch, lambda_fk: f64) -> f64 {
        let mut tape = Tape::new(&self.store);
        let l = self.loss_graph(&mut tape, batch, lambda_fk);
        tape.scalar(l)
    }
}

/// Train on the dataset's train split. Every clip needs a segment annotation
/// and all clips must share one length.
pub fn train_autoencoder(
    dataset: &MotionDataset,
    codec: &CodecConfig,
    cfg: &AeTrainConfig,
) -> Result<(PhaseAutoencoder, TrainLog)> {
    let clips: Vec<&MotionClip> = dataset.iter_split(Split::Train).collect();
    if clips.is_empty() {
        return Err(Error::Validation("no training clips".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let feats: Vec<Mat> = clips.iter().map(|c| PoseFeatures::from_clip(c)).collect();
    let normalizer = FeatureNormalizer::fit(&feats, cfg.std_floor)?;
    let mut model = PhaseAutoencoder::new(codec.clone(), dataset.skeleton().clone(), normalizer, cfg.seed)?;
    let tensors = clips.iter().map(|c| model.clip_tensors(c)).collect::<Result<Vec<_>>>()?;

    let batch = cfg.batch_size.min(tensors.len());
    let per_epoch = tensors.len().div_ceil(batch);
    let mut opt = Adam::new(LrSchedule {
        start: cfg.lr_start,
        end: cfg.lr_end,
        total_steps: cfg.epochs * per_epoch,
    });
    let mut rng = rng::stream(cfg.seed, rng::AE_TRAIN);
    let mut order: Vec<usize> = (0..tensors.len()).collect();
    let mut log = TrainLog::default();
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let parts: Vec<&ClipTensors> = chunk.iter().map(|&i| &tensors[i]).collect();
            let b = PhaseAutoencoder::stack(&parts)?;
            let grads = {
                let mut tape = Tape::new(&model.store);
                let l = model.loss_graph(&mut tape, &b, cfg.lambda_fk);
                let v = tape.scalar(l);
                if !v.is_finite() {
                    return Err(Error::Divergence(format!(
                        "autoencoder loss became {v} at epoch {epoch}, step {}",
                        log.steps
                    )));
                }
                total += v * chunk.len() as f64;
                tape.backward(l)
            };
            opt.step(&mut model.store, &grads);
            log.steps += 1;
        }
        log.epoch_loss.push(total / tensors.len() as f64);
    }
    log.seconds = start.elapsed().as_secs_f64();
    Ok((model, log))
}
