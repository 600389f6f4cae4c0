//! Phase autoencoder: a convolutional MLP encoder from a motion's primary
//! segment to phase parameters, and a temporal convolutional decoder from the
//! assembled phase signal back to pose features.

mod ops;
mod train;

pub use ops::{FkOp, PhaseSignalOp};
pub use train::{train_autoencoder, AeBatch, AeTrainConfig, TrainLog};

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use phasegen_nn::checkpoint::{load_store, save_store};
use phasegen_nn::{Conv1d, Linear, Mat, ParamStore, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{FeatureNormalizer, MotionClip, PoseFeatures, Skeleton};
use crate::phase::{FramePlan, FrequencySet, PhaseParams, PhaseSignal, Representation};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub num_phases: usize,
    pub f_max: u32,
    pub repr: Representation,
    /// Frames the primary segment is resampled to before encoding.
    pub enc_frames: usize,
    pub enc_channels: usize,
    pub enc_kernel: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub dec_kernel: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            num_phases: 128,
            f_max: 30,
            repr: Representation::SinCos,
            enc_frames: 32,
            enc_channels: 16,
            enc_kernel: 3,
            enc_hidden: 256,
            dec_hidden: 64,
            dec_kernel: 5,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enc_frames < 2 || self.enc_channels == 0 || self.enc_hidden == 0 || self.dec_hidden == 0 {
            return Err(Error::Config("codec layer sizes must be positive".into()));
        }
        if self.enc_kernel % 2 == 0 || self.dec_kernel % 2 == 0 {
            return Err(Error::Config("convolution kernels must be odd".into()));
        }
        FrequencySet::new(self.num_phases, self.f_max).map(|_| ())
    }

    pub fn signal_channels(&self) -> usize {
        self.repr.channels_per_phase() * self.num_phases
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    conv: Conv1d,
    fc: [Linear; 4],
}

#[derive(Debug, Clone)]
struct Decoder {
    convs: [Conv1d; 4],
}

impl Decoder {
    fn forward(&self, tape: &mut Tape, frozen: Option<&ParamStore>, x: Var, seq: usize) -> Var {
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = match frozen {
                Some(store) => conv.forward_frozen(tape, store, h, seq),
                None => conv.forward(tape, h, seq),
            };
            if i + 1 < self.convs.len() {
                h = tape.gelu(h);
            }
        }
        h
    }
}

/// Trained or freshly initialized encoder/decoder pair with everything
/// needed to map between clips and phase parameters.
#[derive(Debug, Clone)]
pub struct PhaseAutoencoder {
    pub config: CodecConfig,
    pub freqs: FrequencySet,
    pub skeleton: Skeleton,
    pub normalizer: FeatureNormalizer,
    pub store: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

/// Linearly resample frames `t_s..=t_e` (1-based) to `n` rows.
pub fn resample_segment(features: ArrayView2<f64>, t_s: usize, t_e: usize, n: usize) -> Array2<f64> {
    let seg = features.slice(ndarray::s![t_s - 1..t_e, ..]);
    let len = seg.nrows();
    let mut out = Array2::zeros((n, features.ncols()));
    for j in 0..n {
        let x = j as f64 * (len - 1) as f64 / (n - 1) as f64;
        let lo = (x.floor() as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        let w = x - lo as f64;
        for d in 0..features.ncols() {
            out[[j, d]] = (1.0 - w) * seg[[lo, d]] + w * seg[[hi, d]];
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodecMeta {
    pub format_version: u32,
    pub code_version: String,
    pub config: CodecConfig,
    pub freqs: Vec<u32>,
    pub pose_dim: usize,
    pub skeleton: Skeleton,
    pub normalizer: FeatureNormalizer,
    pub layer_shapes: Vec<(String, [usize; 2])>,
    #[serde(default)]
    pub training: Option<serde_json::Value>,
}

pub const META_FILE: &str = "meta.json";

impl PhaseAutoencoder {
    pub fn new(config: CodecConfig, skeleton: Skeleton, normalizer: FeatureNormalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let pose_dim = PoseFeatures::dim(skeleton.num_joints());
        if normalizer.dim() != pose_dim {
            return Err(Error::Structural(format!(
                "normalizer width {} does not match pose dimension {pose_dim}",
                normalizer.dim()
            )));
        }
        let freqs = FrequencySet::new(config.num_phases, config.f_max)?;
        let mut rng = rng::stream(seed, rng::AE_INIT);
        let mut store = ParamStore::new();
        let c = &config;
        let conv = Conv1d::new(&mut store, "encoder.conv", pose_dim, c.enc_channels, c.enc_kernel, &mut rng);
        let flat = c.enc_frames * c.enc_channels;
        let fc = [
            Linear::new(&mut store, "encoder.fc0", flat, c.enc_hidden, &mut rng),
            Linear::new(&mut store, "encoder.fc1", c.enc_hidden, c.enc_hidden, &mut rng),
            Linear::new(&mut store, "encoder.fc2", c.enc_hidden, c.enc_hidden, &mut rng),
            Linear::new(&mut store, "encoder.fc3", c.enc_hidden, 3 * c.num_phases, &mut rng),
        ];
        let ch = c.signal_channels();
        let h = c.dec_hidden;
        let k = c.dec_kernel;
        let convs = [
            Conv1d::new(&mut store, "decoder.conv0", ch, h, k, &mut rng),
            Conv1d::new(&mut store, "decoder.conv1", h, h, k, &mut rng),
            Conv1d::new(&mut store, "decoder.conv2", h, h, k, &mut rng),
            Conv1d::new(&mut store, "decoder.conv3", h, pose_dim, k, &mut rng),
        ];
        Ok(PhaseAutoencoder {
            config,
            freqs,
            skeleton,
            normalizer,
            store,
            encoder: Encoder { conv, fc },
            decoder: Decoder { convs },
        })
    }

    pub fn pose_dim(&self) -> usize {
        PoseFeatures::dim(self.skeleton.num_joints())
    }

    pub fn num_phases(&self) -> usize {
        self.config.num_phases
    }

    /// Frames on each side of an output frame that the decoder reads.
    pub fn receptive_radius(&self) -> usize {
        self.decoder.convs.iter().map(Conv1d::radius).sum()
    }

    /// Encoder graph on stacked `(B * enc_frames) x D` normalized inputs;
    /// returns `(a, p, o)` nodes, each `B x M`.
    pub fn encode_graph(&self, tape: &mut Tape, x: Var, batch: usize) -> (Var, Var, Var) {
        let c = &self.config;
        let h = self.encoder.conv.forward(tape, x, c.enc_frames);
        let h = tape.gelu(h);
        let mut h = tape.reshape(h, batch, c.enc_frames * c.enc_channels);
        for fc in &self.encoder.fc[..3] {
            h = fc.forward(tape, h);
            h = tape.gelu(h);
        }
        let out = self.encoder.fc[3].forward(tape, h);
        let m = c.num_phases;
        let a = tape.slice_cols(out, 0, m);
        let a = tape.softplus(a);
        let p = tape.slice_cols(out, m, m);
        let p = tape.sigmoid(p);
        let o = tape.slice_cols(out, 2 * m, m);
        (a, p, o)
    }

    /// Signal synthesis on the tape.
    pub fn signal_graph(&self, tape: &mut Tape, a: Var, p: Var, o: Var, plans: Vec<FramePlan>) -> Var {
        let op = PhaseSignalOp {
            freqs: self.freqs.as_slice().to_vec(),
            plans,
            repr: self.config.repr,
        };
        tape.custom(Box::new(op), &[a, p, o])
    }

    /// Decoder graph. With `frozen = true` the weights enter the tape as
    /// constants, so the tape may belong to another model's store.
    pub fn decode_graph(&self, tape: &mut Tape, signal: Var, seq: usize, frozen: bool) -> Var {
        let store = if frozen { Some(&self.store) } else { None };
        self.decoder.forward(tape, store, signal, seq)
    }

    /// FK positions (root at `(0, h, 0)`, in units of the mean bone length)
    /// of normalized features.
    pub fn fk_graph(&self, tape: &mut Tape, features: Var) -> Var {
        let op = FkOp::new(&self.skeleton, &self.normalizer, 1.0 / self.skeleton.mean_bone_length());
        tape.custom(Box::new(op), &[features])
    }

    fn encoder_input(&self, features: ArrayView2<f64>, t_s: usize, t_e: usize) -> Result<Array2<f64>> {
        if features.ncols() != self.pose_dim() {
            return Err(Error::Structural(format!(
                "pose features have {} columns, model expects {}",
                features.ncols(),
                self.pose_dim()
            )));
        }
        if !(1 <= t_s && t_s < t_e && t_e <= features.nrows()) {
            return Err(Error::Validation(format!(
                "segment ({t_s}, {t_e}) invalid for {} frames",
                features.nrows()
            )));
        }
        let norm = self.normalizer.normalize(features);
        Ok(resample_segment(norm.view(), t_s, t_e, self.config.enc_frames))
    }

    /// Phase parameters of raw pose features over the segment `[t_s, t_e]`.
    pub fn encode_features(&self, features: ArrayView2<f64>, t_s: usize, t_e: usize) -> Result<PhaseParams> {
        let x = self.encoder_input(features, t_s, t_e)?;
        let mut tape = Tape::new(&self.store);
        let xv = tape.input(x);
        let (a, p, o) = self.encode_graph(&mut tape, xv, 1);
        let row = |v: Var| tape.value(v).row(0).to_vec();
        PhaseParams::new(row(a), row(p), row(o))
    }

    pub fn encode(&self, clip: &MotionClip, t_s: usize, t_e: usize) -> Result<PhaseParams> {
        self.check_skeleton(clip)?;
        self.encode_features(PoseFeatures::from_clip(clip).view(), t_s, t_e)
    }

    fn check_skeleton(&self, clip: &MotionClip) -> Result<()> {
        if clip.skeleton.num_joints() != self.skeleton.num_joints() {
            return Err(Error::Structural(format!(
                "clip has {} joints, model expects {}",
                clip.skeleton.num_joints(),
                self.skeleton.num_joints()
            )));
        }
        Ok(())
    }

    /// Decoded raw (denormalized) pose features, one row per signal frame.
    pub fn decode_features(&self, signal: &PhaseSignal) -> Result<Array2<f64>> {
        let norm = self.decode_normalized(signal.samples.view())?;
        Ok(self.normalizer.denormalize(norm.view()))
    }

    /// Decoder output in normalized feature space.
    pub fn decode_normalized(&self, samples: ArrayView2<f64>) -> Result<Mat> {
        if samples.ncols() != self.config.signal_channels() {
            return Err(Error::Structural(format!(
                "signal has {} channels, decoder expects {}",
                samples.ncols(),
                self.config.signal_channels()
            )));
        }
        let mut tape = Tape::new(&self.store);
        let s = tape.input(samples.to_owned());
        let y = self.decode_graph(&mut tape, s, samples.nrows(), false);
        Ok(tape.value(y).clone())
    }

    pub fn decode(&self, signal: &PhaseSignal, fps: f64, text: Option<String>) -> Result<MotionClip> {
        let f = self.decode_features(signal)?;
        PoseFeatures::to_clip(f.view(), &self.skeleton, fps, text)
    }

    /// Encode the clip's annotated segment, re-assemble the full signal and
    /// decode it.
    pub fn reconstruct(&self, clip: &MotionClip) -> Result<MotionClip> {
        let (t_s, t_e) = clip
            .segment()
            .ok_or_else(|| Error::Validation("clip has no segment annotation".into()))?;
        let x = self.encode(clip, t_s, t_e)?;
        let plan = FramePlan::clip(t_s, t_e, clip.len())?;
        let signal = crate::phase::synthesize(&x, &self.freqs, &plan, self.config.repr)?;
        let mut out = self.decode(&signal, clip.fps, clip.text.clone())?;
        out.t_s = clip.t_s;
        out.t_e = clip.t_e;
        Ok(out)
    }

    pub fn meta(&self, training: Option<serde_json::Value>) -> CodecMeta {
        CodecMeta {
            format_version: 1,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            freqs: self.freqs.as_slice().to_vec(),
            pose_dim: self.pose_dim(),
            skeleton: self.skeleton.clone(),
            normalizer: self.normalizer.clone(),
            layer_shapes: self.store.shapes(),
            training,
        }
    }

    /// Checkpoint directory: one tensor file per weight plus `meta.json`.
    pub fn save(&self, dir: &Path, training: Option<serde_json::Value>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        save_store(dir, "", &self.store)?;
        let meta = serde_json::to_string_pretty(&self.meta(training)).expect("meta serialization");
        let path = dir.join(META_FILE);
        std::fs::write(&path, meta).map_err(Error::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: CodecMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut model = PhaseAutoencoder::new(meta.config, meta.skeleton, meta.normalizer, 0)?;
        if model.freqs.as_slice() != meta.freqs.as_slice() {
            return Err(Error::Parse {
                path,
                message: "frequency set does not match config".into(),
            });
        }
        load_store(dir, "", &mut model.store)?;
        Ok(model)
    }
}
