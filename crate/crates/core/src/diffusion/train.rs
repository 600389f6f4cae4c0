use std::time::Instant;

use ndarray::{Array1, Array2};
use phasegen_nn::{Adam, LrSchedule, Mat, Tape, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::{pose_vector, Condition, Denoiser, DenoiserConfig};
use super::schedule::NoiseSchedule;
use super::text::TextEncoder;
use crate::codec::PhaseAutoencoder;
use crate::error::{Error, Result};
use crate::motion::{MotionDataset, PoseFeatures, Split};
use crate::phase::FramePlan;
use crate::rng;
use crate::segmentation::SegmentAnnotation;

/// What the decoded prediction is compared against.
#[derive(Debug, Clone)]
pub struct DecodeTarget {
    pub plan: FramePlan,
    /// Codec-normalized pose features of the full clip.
    pub features: Mat,
}

/// One training example: clean raw parameters and their conditions.
#[derive(Debug, Clone)]
pub struct DiffusionItem {
    pub x0: Vec<f64>,
    pub text: Option<Vec<f64>>,
    pub pose: Option<Vec<f64>>,
    pub target: Option<DecodeTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub mask_text: f64,
    pub mask_pose: f64,
    /// Weight of the decoded-motion term.
    pub lambda_dec: f64,
    pub seed: u64,
    /// Floor on per-dimension spreads used for standardization.
    pub std_floor: f64,
}

impl Default for DiffTrainConfig {
    fn default() -> Self {
        DiffTrainConfig {
            iterations: 2000,
            batch_size: 32,
            lr_start: 1e-3,
            lr_end: 1e-5,
            mask_text: 0.1,
            mask_pose: 0.1,
            lambda_dec: 0.5,
            seed: 0,
            std_floor: 1e-3,
        }
    }
}

impl DiffTrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("mask_text", self.mask_text), ("mask_pose", self.mask_pose)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be a probability, got {p}")));
            }
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config("iterations and batch size must be positive".into()));
        }
        if !(self.lambda_dec >= 0.0) {
            return Err(Error::Config("lambda_dec must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffTrainLog {
    pub losses: Vec<f64>,
    pub seconds: f64,
}

/// One noised batch with conditions already masked.
#[derive(Debug, Clone)]
pub struct DiffBatch {
    /// Standardized clean parameters, `B x D`.
    pub x0: Mat,
    /// Standardized noised parameters.
    pub xn: Mat,
    pub steps: Vec<usize>,
    pub conds: Vec<Condition>,
    pub plans: Vec<FramePlan>,
    /// Stacked targets when every item has one.
    pub target: Option<Mat>,
}

/// Per-dimension mean and floored spread of the clean parameters.
pub fn fit_standardization(items: &[DiffusionItem], floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = items
        .first()
        .map(|i| i.x0.len())
        .ok_or_else(|| Error::Validation("no diffusion training items".into()))?;
    if items.iter().any(|i| i.x0.len() != d) {
        return Err(Error::Structural("training items differ in parameter length".into()));
    }
    let n = items.len() as f64;
    let mut mean = vec![0.0; d];
    for it in items {
        for (m, x) in mean.iter_mut().zip(&it.x0) {
            *m += x / n;
        }
    }
    let mut std = vec![0.0; d];
    for it in items {
        for ((s, x), m) in std.iter_mut().zip(&it.x0).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    Ok((mean, std.into_iter().map(|v| v.sqrt().max(floor)).collect()))
}

/// Training items from a split: one per clip and augmentation-pool entry
/// (or the clip's own annotation when no pool is given). The pose condition
/// is the pose at the entry's start frame.
pub fn build_items(
    dataset: &MotionDataset,
    pools: Option<&[Vec<SegmentAnnotation>]>,
    codec: &PhaseAutoencoder,
    text: &TextEncoder,
    split: Split,
) -> Result<Vec<DiffusionItem>> {
    if let Some(p) = pools {
        if p.len() != dataset.len() {
            return Err(Error::Structural(format!(
                "{} pools for {} clips",
                p.len(),
                dataset.len()
            )));
        }
    }
    let mut items = Vec::new();
    for i in dataset.split_indices(split) {
        let clip = &dataset.clips[i];
        let spans: Vec<(usize, usize)> = match pools {
            Some(p) if !p[i].is_empty() => p[i].iter().map(|a| (a.t_s, a.t_e)).collect(),
            _ => vec![clip
                .segment()
                .ok_or_else(|| Error::Validation(format!("clip {i} has no segment annotation")))?],
        };
        let features = codec
            .normalizer
            .normalize(PoseFeatures::from_clip(clip).view());
        let embedding = text.encode_opt(clip.text.as_deref());
        for (t_s, t_e) in spans {
            let x = codec.encode(clip, t_s, t_e)?;
            items.push(DiffusionItem {
                x0: x.to_vec(),
                text: embedding.clone(),
                pose: Some(pose_vector(&clip.frames[t_s - 1])),
                target: Some(DecodeTarget {
                    plan: FramePlan::clip(t_s, t_e, clip.len())?,
                    features: features.clone(),
                }),
            });
        }
    }
    if items.is_empty() {
        return Err(Error::Validation("split has no clips".into()));
    }
    Ok(items)
}

impl Denoiser {
    /// Noise, mask and stack the given items.
    pub fn make_batch<R: Rng>(
        &self,
        items: &[&DiffusionItem],
        schedule: &NoiseSchedule,
        mask_text: f64,
        mask_pose: f64,
        rng: &mut R,
    ) -> Result<DiffBatch> {
        let b = items.len();
        let d = self.x_dim();
        let mut x0 = Mat::zeros((b, d));
        let mut xn = Mat::zeros((b, d));
        let mut steps = Vec::with_capacity(b);
        let mut conds = Vec::with_capacity(b);
        for (i, it) in items.iter().enumerate() {
            let z = Array1::from(self.standardize(&it.x0));
            let n = rng.random_range(1..=schedule.steps());
            let ab = schedule.alpha_bar(n)?;
            let eps: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            xn.row_mut(i).assign(&(&z * ab.sqrt() + &eps * (1.0 - ab).sqrt()));
            x0.row_mut(i).assign(&z);
            steps.push(n);
            let drop_text = rng.random::<f64>() < mask_text;
            let drop_pose = rng.random::<f64>() < mask_pose;
            conds.push(Condition {
                text: if drop_text { None } else { it.text.clone() },
                pose: if drop_pose { None } else { it.pose.clone() },
            });
        }
        let with_target = items.iter().filter(|i| i.target.is_some()).count();
        let (plans, target) = if with_target == b {
            let views: Vec<_> = items
                .iter()
                .map(|i| i.target.as_ref().expect("checked").features.view())
                .collect();
            let frames = views[0].nrows();
            if views.iter().any(|v| v.nrows() != frames) {
                return Err(Error::Validation("decode targets must share one length".into()));
            }
            (
                items
                    .iter()
                    .map(|i| i.target.as_ref().expect("checked").plan.clone())
                    .collect(),
                Some(ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")),
            )
        } else {
            (Vec::new(), None)
        };
        Ok(DiffBatch {
            x0,
            xn,
            steps,
            conds,
            plans,
            target,
        })
    }

    /// `mse(x0_hat, x0)` in standardized space, plus `lambda_dec` times the
    /// normalized-feature MSE of the frozen decoder's reconstruction when a
    /// codec and targets are available.
    pub fn loss_graph(
        &self,
        tape: &mut Tape,
        batch: &DiffBatch,
        codec: Option<&PhaseAutoencoder>,
        lambda_dec: f64,
    ) -> Var {
        let xn = tape.input(batch.xn.clone());
        let conds: Vec<&Condition> = batch.conds.iter().collect();
        let pred = self.graph(tape, xn, &batch.steps, &conds);
        let x0 = tape.input(batch.x0.clone());
        let loss = tape.mse(pred, x0);
        let (Some(codec), Some(target)) = (codec, batch.target.as_ref()) else {
            return loss;
        };
        if lambda_dec == 0.0 {
            return loss;
        }
        let b = batch.steps.len();
        let m = self.config.num_tokens;
        let spread = Array2::from_shape_fn((b, self.x_dim()), |(_, j)| self.x_std[j]);
        let spread = tape.input(spread);
        let mean = tape.input(Array2::from_shape_vec((1, self.x_dim()), self.x_mean.clone()).expect("row"));
        let raw = tape.mul(pred, spread);
        let raw = tape.add_row(raw, mean);
        let triples = tape.reshape(raw, b * m, 3);
        let mut parts = Vec::with_capacity(3);
        for c in 0..3 {
            let col = tape.slice_cols(triples, c, 1);
            parts.push(tape.reshape(col, b, m));
        }
        let signal = codec.signal_graph(tape, parts[0], parts[1], parts[2], batch.plans.clone());
        let frames = target.nrows() / b;
        let decoded = codec.decode_graph(tape, signal, frames, true);
        let t = tape.input(target.clone());
        let dec = tape.mse(decoded, t);
        let dec = tape.scale(dec, lambda_dec);
        tape.add(loss, dec)
    }
}

/// Train a fresh denoiser. With a codec, `lambda_dec > 0` and decode targets
/// on every item, the decoded-motion term is included.
pub fn train_denoiser(
    items: &[DiffusionItem],
    config: &DenoiserConfig,
    train: &DiffTrainConfig,
    schedule: &NoiseSchedule,
    codec: Option<&PhaseAutoencoder>,
) -> Result<(Denoiser, DiffTrainLog)> {
    train.validate()?;
    let (mean, std) = fit_standardization(items, train.std_floor)?;
    let mut model = Denoiser::new(config.clone(), mean, std, train.seed)?;
    if let Some(c) = codec {
        if c.num_phases() != config.num_tokens || config.token_dim != 3 {
            return Err(Error::Structural(format!(
                "codec has {} phases, denoiser expects {} tokens of width {}",
                c.num_phases(),
                config.num_tokens,
                config.token_dim
            )));
        }
    }
    let mut opt = Adam::new(LrSchedule {
        start: train.lr_start,
        end: train.lr_end,
        total_steps: train.iterations,
    });
    let mut rng = rng::stream(train.seed, rng::DIFF_TRAIN);
    let mut log = DiffTrainLog::default();
    let start = Instant::now();
    for it in 0..train.iterations {
        let picks: Vec<&DiffusionItem> = (0..train.batch_size)
            .map(|_| &items[rng.random_range(0..items.len())])
            .collect();
        let batch = model.make_batch(&picks, schedule, train.mask_text, train.mask_pose, &mut rng)?;
        let grads = {
            let mut tape = Tape::new(&model.store);
            let l = model.loss_graph(&mut tape, &batch, codec, train.lambda_dec);
            let v = tape.scalar(l);
            if !v.is_finite() {
                return Err(Error::Divergence(format!(
                    "denoiser loss became {v} at iteration {it}"
                )));
            }
            log.losses.push(v);
            tape.backward(l)
        };
        opt.step(&mut model.store, &grads);
    }
    log.seconds = start.elapsed().as_secs_f64();
    Ok((model, log))
}
