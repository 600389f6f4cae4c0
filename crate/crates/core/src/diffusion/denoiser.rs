use std::path::Path;

use ndarray::Array2;
use phasegen_nn::checkpoint::{load_store, save_store};
use phasegen_nn::{LayerNorm, Linear, Mat, ParamId, ParamStore, Tape, TransformerBlock, Var};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::Pose;
use crate::rng;

/// Tokens ahead of the phase tokens: text, pose, step.
pub const COND_TOKENS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Phase tokens per sample (M).
    pub num_tokens: usize,
    /// Scalars per phase token; 3 for `(a, p, o)`.
    pub token_dim: usize,
    pub text_dim: usize,
    pub pose_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
}

impl DenoiserConfig {
    /// Full-size transformer: 8 layers of width 512.
    pub fn new(num_tokens: usize, text_dim: usize, pose_dim: usize) -> Self {
        DenoiserConfig {
            num_tokens,
            token_dim: 3,
            text_dim,
            pose_dim,
            width: 512,
            layers: 8,
            heads: 8,
            ff_mult: 4,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.num_tokens * self.token_dim
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.num_tokens,
            self.token_dim,
            self.text_dim,
            self.pose_dim,
            self.width,
            self.layers,
            self.heads,
            self.ff_mult,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config("denoiser sizes must be positive".into()));
        }
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        Ok(())
    }
}

/// Conditioning inputs. `None` is the masked (null) condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub text: Option<Vec<f64>>,
    pub pose: Option<Vec<f64>>,
}

impl Condition {
    pub fn null() -> Self {
        Condition::default()
    }

    pub fn without_text(&self) -> Self {
        Condition {
            text: None,
            pose: self.pose.clone(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.text.is_none() && self.pose.is_none()
    }
}

/// Pose-token input: root height followed by every joint quaternion.
pub fn pose_vector(pose: &Pose) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + 4 * pose.joint_rotations.len());
    v.push(pose.root_position[1]);
    for q in &pose.joint_rotations {
        v.extend_from_slice(&q.to_array());
    }
    v
}

pub fn pose_vector_dim(num_joints: usize) -> usize {
    1 + 4 * num_joints
}

/// Sinusoidal embedding of a diffusion step.
pub fn step_embedding(n: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut e = vec![0.0; width];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        let (s, c) = (n as f64 * freq).sin_cos();
        e[2 * i] = s;
        e[2 * i + 1] = c;
    }
    e
}

#[derive(Debug, Clone)]
struct Layers {
    input: Linear,
    position: ParamId,
    text: Linear,
    pose: Linear,
    step1: Linear,
    step2: Linear,
    null_text: ParamId,
    null_pose: ParamId,
    blocks: Vec<TransformerBlock>,
    norm: LayerNorm,
    output: Linear,
}

/// x0-predicting transformer over `[text, pose, step, phase_1 .. phase_M]`
/// tokens. It works on standardized parameter vectors; `x_mean` and `x_std`
/// map them to and from raw phase parameters.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub store: ParamStore,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    layers: Layers,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenoiserMeta {
    format_version: u32,
    code_version: String,
    config: DenoiserConfig,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    layer_shapes: Vec<(String, [usize; 2])>,
}

const META_FILE: &str = "meta.json";

impl Denoiser {
    pub fn new(config: DenoiserConfig, x_mean: Vec<f64>, x_std: Vec<f64>, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.x_dim();
        if x_mean.len() != d || x_std.len() != d {
            return Err(Error::Structural(format!(
                "standardization vectors must have {d} entries"
            )));
        }
        if x_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Validation("standardization spreads must be positive".into()));
        }
        let mut rng = rng::stream(seed, rng::DIFF_INIT);
        let mut store = ParamStore::new();
        let w = config.width;
        let small = Normal::new(0.0, 0.02).expect("valid normal");
        let randn = |rows: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            Array2::from_shape_simple_fn((rows, w), || small.sample(rng))
        };
        let input = Linear::new(&mut store, "denoiser.input", config.token_dim, w, &mut rng);
        // phase tokens start out distinguishable by a sinusoidal code
        let pos_init = Array2::from_shape_fn((config.num_tokens, w), |(i, j)| step_embedding(i, w)[j]);
        let position = store.add("denoiser.position", pos_init);
        let text = Linear::new(&mut store, "denoiser.text", config.text_dim, w, &mut rng);
        let pose = Linear::new(&mut store, "denoiser.pose", config.pose_dim, w, &mut rng);
        let step1 = Linear::new(&mut store, "denoiser.step1", w, w, &mut rng);
        let step2 = Linear::new(&mut store, "denoiser.step2", w, w, &mut rng);
        let null_text = store.add("denoiser.null_text", randn(1, &mut rng));
        let null_pose = store.add("denoiser.null_pose", randn(1, &mut rng));
        let blocks = (0..config.layers)
            .map(|i| {
                TransformerBlock::new(
                    &mut store,
                    &format!("denoiser.block{i}"),
                    w,
                    config.heads,
                    config.ff_mult,
                    &mut rng,
                )
            })
            .collect();
        let norm = LayerNorm::new(&mut store, "denoiser.norm", w);
        let output = Linear::new(&mut store, "denoiser.output", w, config.token_dim, &mut rng);
        Ok(Denoiser {
            config,
            store,
            x_mean,
            x_std,
            layers: Layers {
                input,
                position,
                text,
                pose,
                step1,
                step2,
                null_text,
                null_pose,
                blocks,
                norm,
                output,
            },
        })
    }

    pub fn x_dim(&self) -> usize {
        self.config.x_dim()
    }

    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.x_mean.iter().zip(&self.x_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.x_mean.iter().zip(&self.x_std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }

    fn check_conditions(&self, conds: &[&Condition]) -> Result<()> {
        for c in conds {
            if let Some(t) = &c.text {
                if t.len() != self.config.text_dim {
                    return Err(Error::Structural(format!(
                        "text embedding has {} entries, model expects {}",
                        t.len(),
                        self.config.text_dim
                    )));
                }
            }
            if let Some(p) = &c.pose {
                if p.len() != self.config.pose_dim {
                    return Err(Error::Structural(format!(
                        "pose condition has {} entries, model expects {}",
                        p.len(),
                        self.config.pose_dim
                    )));
                }
            }
        }
        Ok(())
    }

    fn cond_token(
        &self,
        tape: &mut Tape,
        proj: &Linear,
        null: ParamId,
        dim: usize,
        values: Vec<Option<&Vec<f64>>>,
    ) -> Var {
        let b = values.len();
        let mut x = Mat::zeros((b, dim));
        let mut mask = vec![false; b];
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(v) => x.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice())),
                None => mask[i] = true,
            }
        }
        let xi = tape.input(x);
        let h = proj.forward(tape, xi);
        let null = tape.param(null);
        tape.select_rows(h, null, &mask)
    }

    /// Predicted standardized x0 (`B x 3M`) from standardized noisy inputs.
    pub fn graph(&self, tape: &mut Tape, xn: Var, steps: &[usize], conds: &[&Condition]) -> Var {
        let c = &self.config;
        let l = &self.layers;
        let b = steps.len();
        let (m, w) = (c.num_tokens, c.width);
        let seq = COND_TOKENS + m;

        let x = tape.reshape(xn, b * m, c.token_dim);
        let x = l.input.forward(tape, x);
        let pos = tape.param(l.position);
        let pos = tape.repeat_rows(pos, b);
        let phase = tape.add(x, pos);

        let text = self.cond_token(tape, &l.text, l.null_text, c.text_dim, conds.iter().map(|c| c.text.as_ref()).collect());
        let pose = self.cond_token(tape, &l.pose, l.null_pose, c.pose_dim, conds.iter().map(|c| c.pose.as_ref()).collect());
        let mut se = Mat::zeros((b, w));
        for (i, &n) in steps.iter().enumerate() {
            se.row_mut(i).assign(&ndarray::Array1::from(step_embedding(n, w)));
        }
        let se = tape.input(se);
        let st = l.step1.forward(tape, se);
        let st = tape.gelu(st);
        let step = l.step2.forward(tape, st);

        let all = tape.concat_rows(&[text, pose, step, phase]);
        let order: Vec<usize> = (0..b)
            .flat_map(|i| {
                [i, b + i, 2 * b + i]
                    .into_iter()
                    .chain((0..m).map(move |j| COND_TOKENS * b + i * m + j))
            })
            .collect();
        let mut h = tape.gather_rows(all, &order);
        for block in &l.blocks {
            h = block.forward(tape, h, seq);
        }
        let h = l.norm.forward(tape, h);
        let pick: Vec<usize> = (0..b)
            .flat_map(|i| (0..m).map(move |j| i * seq + COND_TOKENS + j))
            .collect();
        let h = tape.gather_rows(h, &pick);
        let out = l.output.forward(tape, h);
        tape.reshape(out, b, c.x_dim())
    }

    /// Inference on standardized inputs.
    pub fn predict(&self, xn: &Mat, steps: &[usize], conds: &[&Condition]) -> Result<Mat> {
        if xn.ncols() != self.x_dim() || xn.nrows() != steps.len() || conds.len() != steps.len() {
            return Err(Error::Structural(format!(
                "denoiser input {:?} with {} steps and {} conditions; expected width {}",
                xn.dim(),
                steps.len(),
                conds.len(),
                self.x_dim()
            )));
        }
        self.check_conditions(conds)?;
        let mut tape = Tape::new(&self.store);
        let x = tape.input(xn.clone());
        let y = self.graph(&mut tape, x, steps, conds);
        Ok(tape.value(y).clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        save_store(dir, "", &self.store)?;
        let meta = DenoiserMeta {
            format_version: 1,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            x_mean: self.x_mean.clone(),
            x_std: self.x_std.clone(),
            layer_shapes: self.store.shapes(),
        };
        let path = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(&meta).expect("meta serialization");
        std::fs::write(&path, text).map_err(Error::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let meta: DenoiserMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut model = Denoiser::new(meta.config, meta.x_mean, meta.x_std, 0)?;
        load_store(dir, "", &mut model.store)?;
        Ok(model)
    }
}

/// Anything that predicts standardized x0 for a batch; lets the sampler run
/// on stub models in tests.
pub trait X0Model {
    fn x_dim(&self) -> usize;
    fn predict_x0(&self, xn: &Mat, steps: &[usize], conds: &[&Condition]) -> Result<Mat>;
    fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

impl X0Model for Denoiser {
    fn x_dim(&self) -> usize {
        self.config.x_dim()
    }

    fn predict_x0(&self, xn: &Mat, steps: &[usize], conds: &[&Condition]) -> Result<Mat> {
        self.predict(xn, steps, conds)
    }

    fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        self.destandardize(z)
    }
}
