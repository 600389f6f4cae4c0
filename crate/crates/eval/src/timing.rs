use std::time::Instant;

use phasegen_core::composer::repeat_phase;
use phasegen_core::diffusion::{ModelStack, SamplerConfig};
use phasegen_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::metrics::{linear_fit, median};
use crate::report::{MetricReport, Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub lengths: Vec<usize>,
    pub runs: usize,
    pub warmup: usize,
    pub prompt: Option<String>,
    pub sampler: SamplerConfig,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            lengths: vec![196, 392, 588, 784, 980],
            runs: 5,
            warmup: 1,
            prompt: Some("a person walks forward".into()),
            sampler: SamplerConfig::default(),
        }
    }
}

/// Wall time of the two stages of repetition-mode generation per target
/// length: sampling the phase parameters, and repeating plus decoding
/// them. Lengths are interleaved within each run so slow drift in machine
/// load spreads over all of them.
pub fn timing_profile(stack: &ModelStack, config: &TimingConfig) -> Result<MetricReport> {
    if config.lengths.len() < 2 || config.runs == 0 {
        return Err(Error::Validation("timing needs at least two lengths and one run".into()));
    }
    let codec = &stack.codec;
    let n = config.lengths.len();
    let mut sample_t = vec![Vec::new(); n];
    let mut decode_t = vec![Vec::new(); n];
    for run in 0..config.warmup + config.runs {
        for (i, &len) in config.lengths.iter().enumerate() {
            let clock = Instant::now();
            let x = stack.sample(config.prompt.as_deref(), None, &config.sampler)?;
            let ts = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let sig = repeat_phase(&x, &codec.freqs, codec.config.repr, stack.period_frames as f64, len)?;
            let f = codec.decode_features(&sig)?;
            std::hint::black_box(&f);
            let td = clock.elapsed().as_secs_f64();
            if run >= config.warmup {
                sample_t[i].push(ts);
                decode_t[i].push(td);
            }
        }
    }
    let mut report = MetricReport::new("timing", config.sampler.seed, config);
    let sm: Vec<f64> = sample_t.iter().map(|v| median(v)).collect();
    let dm: Vec<f64> = decode_t.iter().map(|v| median(v)).collect();
    for (i, &len) in config.lengths.iter().enumerate() {
        report
            .rows
            .push(Row::new(format!("T={len}")).with("frames", len as f64).with("sample_s", sm[i]).with("decode_s", dm[i]));
    }
    let hi = sm.iter().copied().fold(0.0, f64::max);
    let lo = sm.iter().copied().fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = config.lengths.iter().map(|&l| l as f64).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &dm);
    report.set("sample_ratio", hi / lo);
    report.set("decode_slope_s_per_frame", slope);
    report.set("decode_intercept_s", intercept);
    report.set("decode_r2", r2);
    report.set("runs", config.runs as f64);
    report.set("warmup", config.warmup as f64);
    Ok(report)
}
