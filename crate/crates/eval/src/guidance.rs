use phasegen_core::diffusion::{sample_batch, Condition, ModelStack, SamplerConfig};
use phasegen_core::motion::{MotionDataset, PoseFeatures, Split};
use phasegen_core::phase::PhaseParams;
use phasegen_core::{rng, Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::metrics::{clip_descriptor, descriptor, l2, roundtrip_error};
use crate::report::{MetricReport, Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub scales: Vec<f64>,
    /// Adds an `s = 0` row, which drops the text branch entirely.
    pub control: bool,
    /// Periods generated per prompt.
    pub periods: usize,
    /// Band the best round-trip scale is checked against.
    pub band: (f64, f64),
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            scales: vec![1.5, 2.5, 3.5, 4.5, 5.5],
            control: true,
            periods: 3,
            band: (2.5, 3.5),
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

/// For every scale, generate one repeated motion per prompt and report
/// the autoencoder round-trip error (plausibility) and the text distance
/// between each prompt and the prompt of the training clip whose motion is
/// nearest (consistency; lower is better). `chance_distance` repeats the
/// consistency measurement against a shuffled prompt list.
pub fn guidance_sweep(
    stack: &ModelStack,
    dataset: &MotionDataset,
    prompts: &[String],
    config: &GuidanceConfig,
) -> Result<MetricReport> {
    if prompts.is_empty() {
        return Err(Error::Validation("guidance sweep needs prompts".into()));
    }
    let codec = &stack.codec;
    let period = stack.period_frames;
    let frames = config.periods.max(1) * period + 1;
    let reference: Vec<(Vec<f64>, Vec<f64>)> = dataset
        .iter_split(Split::Train)
        .filter_map(|c| {
            let text = stack.text.encode_opt(c.text.as_deref())?;
            Some((clip_descriptor(codec, c), text))
        })
        .collect();
    if reference.is_empty() {
        return Err(Error::Validation("no captioned training clips".into()));
    }
    let embed = |p: &str| {
        stack
            .text
            .encode(p)
            .ok_or_else(|| Error::Validation(format!("prompt {p:?} has no tokens")))
    };
    let query: Vec<Vec<f64>> = prompts.iter().map(|p| embed(p)).collect::<Result<_>>()?;
    let mut shuffled = query.clone();
    shuffled.shuffle(&mut rng::indexed(config.seed, rng::EVAL, 3));

    let mut scales: Vec<(f64, bool)> = Vec::new();
    if config.control {
        scales.push((0.0, true));
    }
    scales.extend(config.scales.iter().map(|&s| (s, false)));

    let mut report = MetricReport::new("guidance-sweep", config.seed, config);
    let conds: Vec<Condition> = prompts.iter().map(|p| stack.condition(Some(p), None)).collect();
    for (s, control) in scales {
        let sampler = SamplerConfig {
            guidance: s,
            seed: config.seed,
            ..config.sampler.clone()
        };
        let raw = sample_batch(&stack.denoiser, &stack.schedule, &conds, &sampler)?;
        let mut rt = 0.0;
        let mut dist = 0.0;
        let mut chance = 0.0;
        for (i, row) in raw.rows().into_iter().enumerate() {
            let x = PhaseParams::from_vec(&row.to_vec())?.canonical();
            let sig = phasegen_core::composer::repeat_phase(&x, &codec.freqs, codec.config.repr, period as f64, frames)?;
            let feats = codec.decode_features(&sig)?;
            let clip = PoseFeatures::to_clip(feats.view(), &codec.skeleton, stack.fps, None)?;
            rt += roundtrip_error(codec, &clip, period)?;
            let d = descriptor(codec, PoseFeatures::from_clip(&clip).view());
            let nearest = reference
                .iter()
                .min_by(|a, b| l2(&a.0, &d).total_cmp(&l2(&b.0, &d)))
                .expect("non-empty");
            dist += l2(&query[i], &nearest.1);
            chance += l2(&shuffled[i], &nearest.1);
        }
        let n = prompts.len() as f64;
        let label = if control { "s=0 (control)".to_string() } else { format!("s={s}") };
        report.rows.push(
            Row::new(label)
                .with("scale", s)
                .with("control", f64::from(u8::from(control)))
                .with("roundtrip_mse", rt / n)
                .with("prompt_distance", dist / n)
                .with("chance_distance", chance / n),
        );
    }
    let best = report
        .rows
        .iter()
        .filter(|r| r.get("control") == Some(0.0))
        .min_by(|a, b| a.get("roundtrip_mse").unwrap().total_cmp(&b.get("roundtrip_mse").unwrap()));
    if let Some(b) = best {
        let s = b.get("scale").unwrap();
        report.set("best_roundtrip_scale", s);
        let in_band = config.band.0 <= s && s <= config.band.1;
        report.set("best_scale_in_band", f64::from(u8::from(in_band)));
    }
    Ok(report)
}
