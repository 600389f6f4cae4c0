//! Conditional denoising diffusion over flattened phase parameters.

mod denoiser;
mod schedule;
mod stack;
mod text;
mod train;

pub use denoiser::{
    pose_vector, pose_vector_dim, step_embedding, Condition, Denoiser, DenoiserConfig, X0Model, COND_TOKENS,
};
pub use schedule::{make_schedule, q_sample, sampling_steps, NoiseSchedule, BETA_END, BETA_START};
pub use stack::{median_period, ModelStack, STACK_FILE};
pub use text::{tokenize, TextEncoder, TEXT_DIM, UNK};
pub use train::{
    build_items, fit_standardization, train_denoiser, DecodeTarget, DiffBatch, DiffTrainConfig, DiffTrainLog,
    DiffusionItem,
};

use ndarray::Array2;
use phasegen_nn::Mat;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseParams;
use crate::rng;

/// How a strided sampler moves from the step-`n` prediction to step `m < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Renoise {
    /// Draw from `q(x_m | x_n, x0_hat)`, the DDPM posterior.
    #[default]
    Posterior,
    /// Re-noise the prediction from scratch with `q(x_m | x0_hat)`.
    Marginal,
}

impl Renoise {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(Renoise::Posterior),
            "marginal" => Ok(Renoise::Marginal),
            other => Err(Error::Config(format!(
                "unknown re-noising rule {other:?} (expected posterior or marginal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub guidance: f64,
    /// Denoising steps actually visited; at most the schedule length.
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub renoise: Renoise,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            guidance: 3.0,
            steps: 50,
            seed: 0,
            renoise: Renoise::Posterior,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.guidance >= 0.0) || !self.guidance.is_finite() {
            return Err(Error::Config(format!("guidance scale must be >= 0, got {}", self.guidance)));
        }
        if self.steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        Ok(())
    }
}

/// Guided prediction `T(j, 0) + s (T(j, c) - T(0, 0))` for every row.
pub fn cfg_predict<M: X0Model + ?Sized>(
    model: &M,
    xn: &Mat,
    steps: &[usize],
    conds: &[&Condition],
    s: f64,
) -> Result<Mat> {
    if conds.iter().all(|c| c.is_null()) {
        // all three branches coincide, so the guided term vanishes
        return model.predict_x0(xn, steps, conds);
    }
    let b = xn.nrows();
    let pose_only: Vec<Condition> = conds.iter().map(|c| c.without_text()).collect();
    let null = Condition::null();
    let mut all: Vec<&Condition> = pose_only.iter().collect();
    all.extend_from_slice(conds);
    all.extend(std::iter::repeat_n(&null, b));
    let x3 = ndarray::concatenate(ndarray::Axis(0), &[xn.view(), xn.view(), xn.view()]).expect("same width");
    let s3: Vec<usize> = steps.iter().chain(steps).chain(steps).copied().collect();
    let out = model.predict_x0(&x3, &s3, &all)?;
    let base = out.slice(ndarray::s![0..b, ..]);
    let full = out.slice(ndarray::s![b..2 * b, ..]);
    let uncond = out.slice(ndarray::s![2 * b..3 * b, ..]);
    Ok(&base + &((&full - &uncond) * s))
}

fn gaussian(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// One chain per condition. Returns raw (de-standardized) samples, one row
/// per condition.
pub fn sample_batch<M: X0Model + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    conds: &[Condition],
    config: &SamplerConfig,
) -> Result<Mat> {
    config.validate()?;
    let visit = sampling_steps(schedule.steps(), config.steps)?;
    let b = conds.len();
    let d = model.x_dim();
    let refs: Vec<&Condition> = conds.iter().collect();
    let mut rng = rng::stream(config.seed, rng::SAMPLER);
    let mut x = gaussian(b, d, &mut rng);
    for (i, &n) in visit.iter().enumerate() {
        let x0 = cfg_predict(model, &x, &vec![n; b], &refs, config.guidance)?;
        let Some(&m) = visit.get(i + 1) else {
            x = x0;
            break;
        };
        let ab_n = schedule.alpha_bar(n)?;
        let ab_m = schedule.alpha_bar(m)?;
        let z = gaussian(b, d, &mut rng);
        x = match config.renoise {
            Renoise::Posterior => {
                let at = ab_n / ab_m;
                let c0 = ab_m.sqrt() * (1.0 - at) / (1.0 - ab_n);
                let ct = at.sqrt() * (1.0 - ab_m) / (1.0 - ab_n);
                let var = (1.0 - ab_m) / (1.0 - ab_n) * (1.0 - at);
                &x0 * c0 + &x * ct + &z * var.sqrt()
            }
            Renoise::Marginal => &x0 * ab_m.sqrt() + &z * (1.0 - ab_m).sqrt(),
        };
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("sampler produced non-finite values".into()));
    }
    let mut raw = Mat::zeros((b, d));
    for (i, row) in x.rows().into_iter().enumerate() {
        let r = model.to_raw(row.as_slice().expect("standard layout"));
        raw.row_mut(i).assign(&ndarray::Array1::from(r));
    }
    Ok(raw)
}

pub fn sample<M: X0Model + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    cond: &Condition,
    config: &SamplerConfig,
) -> Result<Vec<f64>> {
    let out = sample_batch(model, schedule, std::slice::from_ref(cond), config)?;
    Ok(out.row(0).to_vec())
}

/// Sample and canonicalize into valid phase parameters (`a >= 0` via the
/// half-turn equivalence, `p` wrapped into `[0, 1)`).
pub fn sample_params(
    model: &Denoiser,
    schedule: &NoiseSchedule,
    cond: &Condition,
    config: &SamplerConfig,
) -> Result<PhaseParams> {
    if model.config.token_dim != 3 {
        return Err(Error::Structural("phase sampling needs 3 scalars per token".into()));
    }
    let raw = sample(model, schedule, cond, config)?;
    Ok(PhaseParams::from_vec(&raw)?.canonical())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns a constant per branch: 2 for pose-only, 4 for full, 1 for null.
    struct Stub;

    impl X0Model for Stub {
        fn x_dim(&self) -> usize {
            2
        }
        fn predict_x0(&self, xn: &Mat, _steps: &[usize], conds: &[&Condition]) -> Result<Mat> {
            let mut out = Mat::zeros(xn.dim());
            for (i, c) in conds.iter().enumerate() {
                let v = match (c.text.is_some(), c.pose.is_some()) {
                    (true, _) => 4.0,
                    (false, true) => 2.0,
                    (false, false) => 1.0,
                };
                out.row_mut(i).fill(v);
            }
            Ok(out)
        }
    }

    #[test]
    fn three_branch_guidance() {
        let c = Condition {
            text: Some(vec![1.0]),
            pose: Some(vec![0.0]),
        };
        let x = Mat::zeros((1, 2));
        let out = cfg_predict(&Stub, &x, &[5], &[&c], 2.5).unwrap();
        assert_eq!(out[[0, 0]], 9.5);
        let out = cfg_predict(&Stub, &x, &[5], &[&c], 0.0).unwrap();
        assert_eq!(out[[0, 1]], 2.0);
    }

    #[test]
    fn single_step_is_one_prediction() {
        let sched = make_schedule(1).unwrap();
        let cfg = SamplerConfig {
            steps: 1,
            ..SamplerConfig::default()
        };
        let out = sample(&Stub, &sched, &Condition::null(), &cfg).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
    }
}
