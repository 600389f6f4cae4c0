//! Periodic phase parameters and their time-domain signals.
//!
//! A motion is summarized by `M` phases, each an amplitude `a`, a shift `p`
//! (in turns) and an offset `o`, attached to an integer frequency `f`. The
//! periodic section of a clip samples
//! `[a sin(2π(f k + p)) + o, a cos(2π(f k + p)) + o]` with `k` running from 0
//! at `t_s` to 1 at `t_e`; the lead-in and lead-out use the `k`-scaled linear
//! form `k [a sin(2πp) + o, a cos(2πp) + o]`.

use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencySet {
    freqs: Vec<u32>,
}

impl FrequencySet {
    /// `M` integer frequencies spread evenly over `[1, f_max]`; entry `i` is
    /// `round(1 + i (f_max - 1) / (M - 1))`, so frequencies repeat when
    /// `M > f_max`.
    pub fn new(m: usize, f_max: u32) -> Result<Self> {
        if m < 2 || f_max < 2 {
            return Err(Error::Config(format!(
                "need at least 2 phases and f_max >= 2, got M = {m}, f_max = {f_max}"
            )));
        }
        let span = f64::from(f_max - 1);
        let freqs = (0..m)
            .map(|i| (1.0 + i as f64 * span / (m - 1) as f64).round() as u32)
            .collect();
        Ok(FrequencySet { freqs })
    }

    pub fn from_vec(freqs: Vec<u32>) -> Result<Self> {
        if freqs.is_empty() || freqs.contains(&0) {
            return Err(Error::Config("frequencies must be positive integers".into()));
        }
        Ok(FrequencySet { freqs })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.freqs
    }

    pub fn f_max(&self) -> u32 {
        self.freqs.iter().copied().max().unwrap_or(0)
    }
}

pub fn make_frequency_set(m: usize, f_max: u32) -> Result<FrequencySet> {
    FrequencySet::new(m, f_max)
}

/// Wrap into `[0, 1)`.
pub fn wrap_unit(p: f64) -> f64 {
    let r = p.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub o: Vec<f64>,
}

impl PhaseParams {
    /// Validated and canonicalized parameters.
    pub fn new(a: Vec<f64>, p: Vec<f64>, o: Vec<f64>) -> Result<Self> {
        let raw = PhaseParams { a, p, o };
        if raw.a.len() != raw.p.len() || raw.a.len() != raw.o.len() {
            return Err(Error::Structural(format!(
                "phase parameter lengths differ: {} / {} / {}",
                raw.a.len(),
                raw.p.len(),
                raw.o.len()
            )));
        }
        if !raw.is_finite() {
            return Err(Error::Validation("non-finite phase parameters".into()));
        }
        Ok(raw.canonical())
    }

    pub fn zeros(m: usize) -> Self {
        PhaseParams {
            a: vec![0.0; m],
            p: vec![0.0; m],
            o: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.p).chain(&self.o).all(|v| v.is_finite())
    }

    /// `a >= 0` and `p` in `[0, 1)`. A negative amplitude is the same signal
    /// as a positive one shifted by half a turn.
    pub fn canonical(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.len() {
            if out.a[i] < 0.0 {
                out.a[i] = -out.a[i];
                out.p[i] += 0.5;
            }
            out.p[i] = wrap_unit(out.p[i]);
        }
        out
    }

    pub fn is_canonical(&self) -> bool {
        self.a.iter().all(|&a| a >= 0.0) && self.p.iter().all(|&p| (0.0..1.0).contains(&p))
    }

    /// Row-per-phase `(a, p, o)` triples flattened, length `3M`.
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len())
            .flat_map(|i| [self.a[i], self.p[i], self.o[i]])
            .collect()
    }

    /// Inverse of [`PhaseParams::to_vec`]; no canonicalization.
    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() % 3 != 0 {
            return Err(Error::Structural(format!(
                "flat phase vector length {} is not a multiple of 3",
                v.len()
            )));
        }
        let m = v.len() / 3;
        Ok(PhaseParams {
            a: (0..m).map(|i| v[3 * i]).collect(),
            p: (0..m).map(|i| v[3 * i + 1]).collect(),
            o: (0..m).map(|i| v[3 * i + 2]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    SinCos,
    Sin,
}

impl Representation {
    pub fn channels_per_phase(self) -> usize {
        match self {
            Representation::SinCos => 2,
            Representation::Sin => 1,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sincos" => Ok(Representation::SinCos),
            "sin" => Ok(Representation::Sin),
            other => Err(Error::Config(format!(
                "unknown representation {other:?} (expected sincos or sin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentTag {
    RampIn,
    Periodic,
    RampOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTag {
    pub tag: SegmentTag,
    pub k: f64,
}

/// Per-frame section tag and time control value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub frames: Vec<FrameTag>,
}

impl FramePlan {
    /// Plan for a clip of `t_total` frames with primary segment `[t_s, t_e]`
    /// (1-based, inclusive). Boundary frames belong to the periodic section.
    pub fn clip(t_s: usize, t_e: usize, t_total: usize) -> Result<Self> {
        if !(1 <= t_s && t_s < t_e && t_e <= t_total) {
            return Err(Error::Validation(format!(
                "need 1 <= t_s < t_e <= t_T, got ({t_s}, {t_e}, {t_total})"
            )));
        }
        let mut frames = Vec::with_capacity(t_total);
        for t in 1..=t_total {
            let f = if t < t_s {
                FrameTag {
                    tag: SegmentTag::RampIn,
                    k: (t - 1) as f64 / (t_s - 1) as f64,
                }
            } else if t <= t_e {
                FrameTag {
                    tag: SegmentTag::Periodic,
                    k: (t - t_s) as f64 / (t_e - t_s) as f64,
                }
            } else {
                FrameTag {
                    tag: SegmentTag::RampOut,
                    k: (t_total - t) as f64 / (t_total - t_e) as f64,
                }
            };
            frames.push(f);
        }
        Ok(FramePlan { frames })
    }

    /// Purely periodic plan: frame `t` (0-based) samples
    /// `k = (t + start) / (factor * period)`.
    pub fn periodic(period_frames: f64, frames: usize, start: usize, factor: usize) -> Self {
        let d = period_frames * factor as f64;
        FramePlan {
            frames: (0..frames)
                .map(|t| FrameTag {
                    tag: SegmentTag::Periodic,
                    k: (t + start) as f64 / d,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Lengths of the (ramp-in, periodic, ramp-out) runs.
    pub fn run_lengths(&self) -> (usize, usize, usize) {
        let count = |tag| self.frames.iter().filter(|f| f.tag == tag).count();
        (
            count(SegmentTag::RampIn),
            count(SegmentTag::Periodic),
            count(SegmentTag::RampOut),
        )
    }

    /// Tags form contiguous runs in the order ramp-in, periodic, ramp-out.
    pub fn is_ordered(&self) -> bool {
        let rank = |t: SegmentTag| match t {
            SegmentTag::RampIn => 0,
            SegmentTag::Periodic => 1,
            SegmentTag::RampOut => 2,
        };
        self.frames.windows(2).all(|w| rank(w[0].tag) <= rank(w[1].tag))
    }
}

/// `(sin, cos)` channel values of one phase at one frame.
#[inline]
pub fn phase_channels(a: f64, p: f64, o: f64, f: u32, frame: FrameTag) -> (f64, f64) {
    match frame.tag {
        SegmentTag::Periodic => {
            let (s, c) = (TAU * (f64::from(f) * frame.k + p)).sin_cos();
            (a * s + o, a * c + o)
        }
        SegmentTag::RampIn | SegmentTag::RampOut => {
            let (s, c) = (TAU * p).sin_cos();
            (frame.k * (a * s + o), frame.k * (a * c + o))
        }
    }
}

fn check_len(params: &PhaseParams, freqs: &FrequencySet) -> Result<()> {
    if params.len() != freqs.len() {
        return Err(Error::Structural(format!(
            "{} phases but {} frequencies",
            params.len(),
            freqs.len()
        )));
    }
    Ok(())
}

/// Periodic signal at time control `k`, channels `[sin_1, cos_1, ...]`.
pub fn eval_periodic(params: &PhaseParams, freqs: &FrequencySet, k: f64) -> Result<Vec<f64>> {
    check_len(params, freqs)?;
    let frame = FrameTag {
        tag: SegmentTag::Periodic,
        k,
    };
    Ok((0..params.len())
        .flat_map(|i| {
            let (s, c) = phase_channels(params.a[i], params.p[i], params.o[i], freqs.freqs[i], frame);
            [s, c]
        })
        .collect())
}

/// Linear ramp signal at time control `k`, channels `[sin_1, cos_1, ...]`.
pub fn eval_linear(params: &PhaseParams, k: f64) -> Vec<f64> {
    let frame = FrameTag {
        tag: SegmentTag::RampIn,
        k,
    };
    (0..params.len())
        .flat_map(|i| {
            let (s, c) = phase_channels(params.a[i], params.p[i], params.o[i], 1, frame);
            [s, c]
        })
        .collect()
}

/// Time-domain phase signal, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSignal {
    pub samples: Array2<f64>,
    pub plan: FramePlan,
    pub repr: Representation,
}

impl PhaseSignal {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// Sample `params` along an arbitrary frame plan.
pub fn synthesize(
    params: &PhaseParams,
    freqs: &FrequencySet,
    plan: &FramePlan,
    repr: Representation,
) -> Result<PhaseSignal> {
    check_len(params, freqs)?;
    let m = params.len();
    let cpp = repr.channels_per_phase();
    let mut samples = Array2::zeros((plan.len(), cpp * m));
    for (t, &frame) in plan.frames.iter().enumerate() {
        for i in 0..m {
            let (s, c) = phase_channels(params.a[i], params.p[i], params.o[i], freqs.freqs[i], frame);
            samples[[t, cpp * i]] = s;
            if cpp == 2 {
                samples[[t, 2 * i + 1]] = c;
            }
        }
    }
    Ok(PhaseSignal {
        samples,
        plan: plan.clone(),
        repr,
    })
}

/// Full-clip signal: ramp-in, periodic section over `[t_s, t_e]`, ramp-out.
pub fn assemble_signal(
    params: &PhaseParams,
    freqs: &FrequencySet,
    t_s: usize,
    t_e: usize,
    t_total: usize,
) -> Result<PhaseSignal> {
    let plan = FramePlan::clip(t_s, t_e, t_total)?;
    synthesize(params, freqs, &plan, Representation::SinCos)
}

/// Least-squares fit result.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: PhaseParams,
    /// Sum of squared residuals over every fitted sample.
    pub residual: f64,
}

/// Fit `(a, p, o)` per phase to a periodic signal sampled at `ks`.
///
/// Per phase the model is linear in `(A, B, o)` with `A = a cos 2πp` and
/// `B = a sin 2πp`: the sin channel is `A sin θ + B cos θ + o` and the cos
/// channel `A cos θ - B sin θ + o`, `θ = 2π f k`. Solved by a thin QR
/// factorization (modified Gram-Schmidt) of the stacked design matrix.
pub fn fit_params(
    signal: ArrayView2<f64>,
    ks: &[f64],
    freqs: &FrequencySet,
    repr: Representation,
) -> Result<Fit> {
    let cpp = repr.channels_per_phase();
    let m = freqs.len();
    if signal.ncols() != cpp * m {
        return Err(Error::Structural(format!(
            "signal has {} channels, expected {}",
            signal.ncols(),
            cpp * m
        )));
    }
    if signal.nrows() != ks.len() || ks.len() < 3 {
        return Err(Error::Validation("need at least 3 samples with one k each".into()));
    }
    let mut a = Vec::with_capacity(m);
    let mut p = Vec::with_capacity(m);
    let mut o = Vec::with_capacity(m);
    let mut residual = 0.0;
    for i in 0..m {
        let f = f64::from(freqs.freqs[i]);
        let mut cols: [Vec<f64>; 3] = Default::default();
        let mut y = Vec::with_capacity(cpp * ks.len());
        for (t, &k) in ks.iter().enumerate() {
            let (s, c) = (TAU * f * k).sin_cos();
            cols[0].push(s);
            cols[1].push(c);
            cols[2].push(1.0);
            y.push(signal[[t, cpp * i]]);
            if cpp == 2 {
                cols[0].push(c);
                cols[1].push(-s);
                cols[2].push(1.0);
                y.push(signal[[t, 2 * i + 1]]);
            }
        }
        let (coef, res) = least_squares_mgs(cols, &y);
        let amp = coef[0].hypot(coef[1]);
        a.push(amp);
        p.push(if amp > 1e-12 {
            wrap_unit(coef[1].atan2(coef[0]) / TAU)
        } else {
            0.0
        });
        o.push(coef[2]);
        residual += res;
    }
    Ok(Fit {
        params: PhaseParams { a, p, o },
        residual,
    })
}

/// Convenience wrapper for a sin/cos signal.
pub fn fit_params_oracle(signal: ArrayView2<f64>, ks: &[f64], freqs: &FrequencySet) -> Result<PhaseParams> {
    Ok(fit_params(signal, ks, freqs, Representation::SinCos)?.params)
}

/// Solve `min ||X c - y||` for three columns; returns coefficients and the
/// residual sum of squares. Rank-deficient columns get a zero coefficient.
fn least_squares_mgs(mut cols: [Vec<f64>; 3], y: &[f64]) -> ([f64; 3], f64) {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut r = [[0.0f64; 3]; 3];
    let mut live = [true; 3];
    let scale = cols.iter().map(|c| dot(c, c)).fold(0.0f64, f64::max).sqrt();
    for j in 0..3 {
        for i in 0..j {
            if !live[i] {
                continue;
            }
            let rij = dot(&cols[i], &cols[j]);
            r[i][j] = rij;
            let (head, tail) = cols.split_at_mut(j);
            for (x, q) in tail[0].iter_mut().zip(&head[i]) {
                *x -= rij * q;
            }
        }
        let n = dot(&cols[j], &cols[j]).sqrt();
        if n <= 1e-10 * scale.max(1.0) {
            live[j] = false;
            continue;
        }
        r[j][j] = n;
        for x in cols[j].iter_mut() {
            *x /= n;
        }
    }
    let mut qty = [0.0; 3];
    let mut resid: Vec<f64> = y.to_vec();
    for j in 0..3 {
        if live[j] {
            qty[j] = dot(&cols[j], y);
            for (x, q) in resid.iter_mut().zip(&cols[j]) {
                *x -= qty[j] * q;
            }
        }
    }
    let mut c = [0.0; 3];
    for j in (0..3).rev() {
        if !live[j] {
            continue;
        }
        let mut v = qty[j];
        for k in j + 1..3 {
            v -= r[j][k] * c[k];
        }
        c[j] = v / r[j][j];
    }
    (c, dot(&resid, &resid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_endpoints() {
        let f = make_frequency_set(128, 30).unwrap();
        assert_eq!(f.len(), 128);
        assert_eq!(f.as_slice()[0], 1);
        assert_eq!(f.f_max(), 30);
        assert_eq!(make_frequency_set(2, 30).unwrap().as_slice(), &[1, 30]);
        assert!(make_frequency_set(1, 30).is_err());
        assert!(make_frequency_set(4, 1).is_err());
    }

    #[test]
    fn closed_form_points() {
        let f = FrequencySet::from_vec(vec![1]).unwrap();
        let x = PhaseParams::new(vec![1.0], vec![0.0], vec![0.0]).unwrap();
        let v = eval_periodic(&x, &f, 0.0).unwrap();
        assert!(v[0].abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
        let x = PhaseParams::new(vec![2.0], vec![0.25], vec![0.5]).unwrap();
        let v = eval_periodic(&x, &f, 0.0).unwrap();
        assert!((v[0] - 2.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
        let x = PhaseParams::new(vec![1.0], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(eval_linear(&x, 0.0), vec![0.0, 0.0]);
        let v = eval_linear(&x, 1.0);
        assert!(v[0].abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_half_turn() {
        let x = PhaseParams::new(vec![-1.0], vec![0.75], vec![0.1]).unwrap();
        assert_eq!(x.a, vec![1.0]);
        assert!((x.p[0] - 0.25).abs() < 1e-15);
        assert_eq!(wrap_unit(-1e-20), 0.0);
    }

    #[test]
    fn run_lengths_and_degenerate_ramps() {
        let plan = FramePlan::clip(8, 40, 64).unwrap();
        assert_eq!(plan.run_lengths(), (7, 33, 24));
        assert!(plan.is_ordered());
        let plan = FramePlan::clip(1, 64, 64).unwrap();
        assert_eq!(plan.run_lengths(), (0, 64, 0));
        assert!(FramePlan::clip(5, 5, 64).is_err());
    }

    #[test]
    fn sin_only_keeps_sin_channels() {
        let f = make_frequency_set(3, 5).unwrap();
        let x = PhaseParams::new(vec![1.0, 0.5, 0.2], vec![0.1, 0.2, 0.3], vec![0.0, 0.1, -0.1]).unwrap();
        let plan = FramePlan::clip(3, 10, 12).unwrap();
        let full = synthesize(&x, &f, &plan, Representation::SinCos).unwrap();
        let sin = synthesize(&x, &f, &plan, Representation::Sin).unwrap();
        for t in 0..12 {
            for i in 0..3 {
                assert_eq!(sin.samples[[t, i]], full.samples[[t, 2 * i]]);
            }
        }
    }
}
