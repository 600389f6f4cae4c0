use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;

/// Forward-process variances. Steps are numbered `1..=N`; index `n - 1`
/// of each vector belongs to step `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(n: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!("invalid beta range [{beta_start}, {beta_end}]")));
        }
        let betas: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(n);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.steps() {
            return Err(Error::Validation(format!(
                "diffusion step {n} outside [1, {}]",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn alpha_bar(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(self.alpha_bars[n - 1])
    }
}

/// Linear schedule with the default beta range.
pub fn make_schedule(n: usize) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(n, BETA_START, BETA_END)
}

/// `sqrt(ab_n) x0 + sqrt(1 - ab_n) eps`.
pub fn q_sample(schedule: &NoiseSchedule, x0: &[f64], n: usize, eps: &[f64]) -> Result<Vec<f64>> {
    let ab = schedule.alpha_bar(n)?;
    if eps.len() != x0.len() {
        return Err(Error::Structural(format!(
            "noise has {} entries, sample has {}",
            eps.len(),
            x0.len()
        )));
    }
    let (s0, s1) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| s0 * x + s1 * e).collect())
}

/// Descending step numbers visited by a sampler using `count` of the
/// schedule's steps, always starting at `N`.
pub fn sampling_steps(total: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > total {
        return Err(Error::Config(format!(
            "sampling steps must be in [1, {total}], got {count}"
        )));
    }
    let mut out: Vec<usize> = (1..=count)
        .rev()
        .map(|i| ((i * total) as f64 / count as f64).round() as usize)
        .collect();
    out.dedup();
    Ok(out)
}
