use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use phasegen_core::codec::{train_autoencoder, AeTrainConfig, CodecConfig, PhaseAutoencoder};
use phasegen_core::composer::{
    blend, blend_at, decode_interpolated, generate_long, interpolate, ComposeConfig, ComposeMode,
};
use phasegen_core::diffusion::{
    build_items, make_schedule, median_period, pose_vector_dim, train_denoiser, DenoiserConfig, DiffTrainConfig,
    ModelStack, Renoise, SamplerConfig, TextEncoder,
};
use phasegen_core::motion::{
    load_clip, load_dataset, save_clip, save_dataset, synth_corpus, CorpusConfig, FamilyConfig, MotionClip,
    MotionDataset, PoseFeatures, Split, FAMILIES,
};
use phasegen_core::phase::{synthesize, FramePlan, PhaseSignal, Representation};
use phasegen_core::segmentation::{
    dataset_pools, detect_segment, embed_dataset, loss_matrix, write_matrix_csv, write_matrix_png,
    SegmentAnnotation, SegmentationWeights, DEFAULT_VELOCITY_WEIGHT, DEFAULT_WINDOW,
};
use phasegen_eval as eval;

use crate::args::*;
use crate::config::{cache_dir, ensure_parent, hash_path, require, write_run_config};
use crate::errors::{usage, validation};
use crate::export;

pub const DEFAULT_LENGTH: usize = 196;
pub const DEFAULT_EXTEND_LENGTH: usize = 588;
pub const DEFAULT_TOP_W: usize = 5;

/// Desk-sized denoiser; the full-size transformer is `--width 512
/// --layers 8 --heads 8 --ff-mult 4`.
pub const DESK_WIDTH: usize = 64;
pub const DESK_LAYERS: usize = 3;
pub const DESK_HEADS: usize = 4;
pub const DESK_FF_MULT: usize = 2;

/// Sidecar holding a clip's augmentation pool, best segment first.
pub fn pool_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("clip_{index:05}.pool.json"))
}

fn sampler(a: &SamplerArgs) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let c = SamplerConfig {
        guidance: a.guidance.unwrap_or(d.guidance),
        steps: a.sampling_steps.unwrap_or(d.steps),
        seed: a.seed.unwrap_or(d.seed),
        renoise: a.renoise.as_deref().map(Renoise::parse).transpose()?.unwrap_or(d.renoise),
    };
    c.validate()?;
    Ok(c)
}

fn parse_list<T: std::str::FromStr>(s: &str, flag: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| usage(format!("--{flag}: cannot parse {v:?}"))))
        .collect()
}

fn load_stack(path: &Path) -> Result<ModelStack> {
    ModelStack::load(path).with_context(|| format!("loading model stack {}", path.display()))
}

/// The clip's own annotation, or the best segment found on it alone.
fn clip_segment(clip: &MotionClip) -> Result<(usize, usize)> {
    if let Some(seg) = clip.segment() {
        return Ok(seg);
    }
    let f = embed_dataset(&[clip], DEFAULT_WINDOW, DEFAULT_VELOCITY_WEIGHT)?;
    let a = detect_segment(f[0].view(), &SegmentationWeights::default())?;
    Ok((a.t_s, a.t_e))
}

fn clip_signal(codec: &PhaseAutoencoder, clip: &MotionClip) -> Result<PhaseSignal> {
    let (t_s, t_e) = clip_segment(clip)?;
    let x = codec.encode(clip, t_s, t_e)?;
    let plan = FramePlan::clip(t_s, t_e, clip.len())?;
    Ok(synthesize(&x, &codec.freqs, &plan, codec.config.repr)?)
}

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    let out = require(&a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let mut cfg = CorpusConfig::default();
    if let Some(names) = &a.families {
        let count = cfg.families[0].count;
        cfg.families = names
            .split(',')
            .map(|n| {
                let n = n.trim();
                if FAMILIES.iter().any(|(f, _)| *f == n) {
                    Ok(FamilyConfig { name: n.to_string(), count })
                } else {
                    Err(validation(format!("unknown motion family {n:?}")))
                }
            })
            .collect::<Result<_>>()?;
    }
    if let Some(n) = a.per_family {
        cfg.families.iter_mut().for_each(|f| f.count = n);
    }
    if let Some(f) = a.frames {
        cfg.frames = f;
    }
    let data = synth_corpus(&cfg, seed)?;
    save_dataset(&data, &out)?;
    write_run_config(&out, "gen-corpus", Some(seed), a, &json!({ "corpus": cfg }), &[])
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let input = require(&a.input, "in")?;
    let out = require(&a.out, "out")?;
    if input.canonicalize().ok() == out.canonicalize().ok() {
        return Err(validation("--out must differ from --in; inputs are never modified"));
    }
    let d = SegmentationWeights::default();
    let weights = SegmentationWeights {
        lambda1: a.lambda1.unwrap_or(d.lambda1),
        lambda2: a.lambda2.unwrap_or(d.lambda2),
        lambda3: a.lambda3.unwrap_or(d.lambda3),
        min_len: a.min_len.unwrap_or(d.min_len),
    };
    let w = a.top_w.unwrap_or(DEFAULT_TOP_W);
    if w == 0 {
        return Err(validation("--top-w must be positive"));
    }
    let mut data = load_dataset(&input)?;
    let pools = dataset_pools(&data, &weights, w)?;
    for (clip, pool) in data.clips.iter_mut().zip(&pools) {
        if let Some(best) = pool.first() {
            clip.t_s = Some(best.t_s);
            clip.t_e = Some(best.t_e);
        }
    }
    save_dataset(&data, &out)?;
    for (i, pool) in pools.iter().enumerate() {
        let p = pool_path(&out, i);
        std::fs::write(&p, serde_json::to_string_pretty(pool)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(dir) = &a.debug_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let n = a.debug_clips.unwrap_or(4).min(data.len());
        let clips: Vec<&MotionClip> = data.clips.iter().collect();
        let emb = embed_dataset(&clips, DEFAULT_WINDOW, DEFAULT_VELOCITY_WEIGHT)?;
        for (i, f) in emb.iter().take(n).enumerate() {
            let m = loss_matrix(f.view());
            write_matrix_csv(&m, &dir.join(format!("clip_{i:05}_loss.csv")))?;
            write_matrix_png(&m, &dir.join(format!("clip_{i:05}_loss.png")))?;
        }
    }
    let resolved = json!({ "weights": weights, "top_w": w, "window": DEFAULT_WINDOW });
    write_run_config(&out, "preprocess", None, a, &resolved, &[("in", &input)])
}

fn load_pools(dir: &Path, data: &MotionDataset) -> Result<Option<Vec<Vec<SegmentAnnotation>>>> {
    if !pool_path(dir, 0).exists() {
        return Ok(None);
    }
    (0..data.len())
        .map(|i| {
            let p = pool_path(dir, i);
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn train_ae(a: &TrainAeArgs) -> Result<()> {
    let data_dir = require(&a.data, "data")?;
    let out = require(&a.out, "out")?;
    let data = load_dataset(&data_dir)?;
    let d = AeTrainConfig::default();
    let train = AeTrainConfig {
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        lr_start: a.lr.unwrap_or(d.lr_start),
        lr_end: a.lr_end.unwrap_or(d.lr_end),
        lambda_fk: a.lambda_fk.unwrap_or(d.lambda_fk),
        seed: a.seed.unwrap_or(d.seed),
        std_floor: d.std_floor,
    };
    let dc = CodecConfig::default();
    let codec_cfg = CodecConfig {
        num_phases: a.phases.unwrap_or(dc.num_phases),
        f_max: a.fmax.unwrap_or(dc.f_max),
        repr: a.repr.as_deref().map(Representation::parse).transpose()?.unwrap_or(dc.repr),
        ..dc
    };
    let (codec, log) = train_autoencoder(&data, &codec_cfg, &train)?;
    let resolved = json!({ "codec": codec_cfg, "train": train });
    codec.save(&out, Some(json!({ "train": train, "final_loss": log.epoch_loss.last() })))?;
    write_run_config(&out, "train-ae", Some(train.seed), a, &resolved, &[("data", &data_dir)])
}

pub fn train_diff(a: &TrainDiffArgs) -> Result<()> {
    let data_dir = require(&a.data, "data")?;
    let ae_dir = require(&a.ae, "ae")?;
    let out = require(&a.out, "out")?;
    let data = load_dataset(&data_dir)?;
    let pools = load_pools(&data_dir, &data)?;
    let codec = PhaseAutoencoder::load(&ae_dir).with_context(|| format!("loading autoencoder {}", ae_dir.display()))?;
    let seed = a.seed.unwrap_or(0);
    let text_dim = a.text_dim.unwrap_or(phasegen_core::diffusion::TEXT_DIM);
    let text = TextEncoder::build(data.clips.iter().filter_map(|c| c.text.as_deref()), text_dim, seed);
    let items = build_items(&data, pools.as_deref(), &codec, &text, Split::Train)?;
    let mut dcfg = DenoiserConfig::new(codec.num_phases(), text_dim, pose_vector_dim(codec.skeleton.num_joints()));
    dcfg.width = a.width.unwrap_or(DESK_WIDTH);
    dcfg.layers = a.layers.unwrap_or(DESK_LAYERS);
    dcfg.heads = a.heads.unwrap_or(DESK_HEADS);
    dcfg.ff_mult = a.ff_mult.unwrap_or(DESK_FF_MULT);
    let d = DiffTrainConfig::default();
    let train = DiffTrainConfig {
        iterations: a.iterations.unwrap_or(d.iterations),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        lr_start: a.lr.unwrap_or(d.lr_start),
        lr_end: a.lr_end.unwrap_or(d.lr_end),
        mask_text: a.mask_text.unwrap_or(d.mask_text),
        mask_pose: a.mask_pose.unwrap_or(d.mask_pose),
        lambda_dec: a.lambda_dec.unwrap_or(d.lambda_dec),
        seed,
        std_floor: d.std_floor,
    };
    let schedule = make_schedule(a.steps.unwrap_or(1000))?;
    let (denoiser, log) = train_denoiser(&items, &dcfg, &train, &schedule, Some(&codec))?;
    let stack = ModelStack {
        codec,
        denoiser,
        text,
        schedule,
        period_frames: median_period(&data, Split::Train)?,
        fps: data.clips[0].fps,
    };
    let resolved = json!({
        "denoiser": dcfg,
        "train": train,
        "diffusion_steps": stack.schedule.steps(),
        "period_frames": stack.period_frames,
        "pools": pools.is_some(),
    });
    stack.save(&out, Some(json!({ "train": train, "final_loss": log.losses.last() })))?;
    write_run_config(&out, "train-diff", Some(seed), a, &resolved, &[("data", &data_dir), ("ae", &ae_dir)])
}

fn compose_config(stack: &ModelStack, mode: ComposeMode, period: Option<usize>, s: SamplerConfig) -> ComposeConfig {
    ComposeConfig {
        mode,
        period_frames: Some(period.unwrap_or(stack.period_frames)),
        sampler: s,
        ..ComposeConfig::default()
    }
}

fn save_motion(clip: &MotionClip, out: &Path) -> Result<()> {
    ensure_parent(out)?;
    Ok(save_clip(clip, out)?)
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let ckpt = require(&a.ckpt, "ckpt")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("clip.json"));
    let s = sampler(&a.sampler)?;
    let stack = load_stack(&ckpt)?;
    let cfg = compose_config(&stack, ComposeMode::Repetition, a.period, s);
    let length = a.length.unwrap_or(DEFAULT_LENGTH);
    let long = generate_long(&stack, std::slice::from_ref(&a.prompt), length, &cfg)?;
    save_motion(&long.clip, &out)?;
    let resolved = json!({ "sampler": cfg.sampler, "period_frames": cfg.period_frames, "length": length });
    write_run_config(&out, "generate", Some(cfg.sampler.seed), a, &resolved, &[("ckpt", &ckpt)])
}

pub fn extend(a: &ExtendArgs) -> Result<()> {
    let ckpt = require(&a.ckpt, "ckpt")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("long.json"));
    let mode = a.mode.as_deref().map(ComposeMode::parse).transpose()?.unwrap_or_default();
    let s = sampler(&a.sampler)?;
    let stack = load_stack(&ckpt)?;
    let mut cfg = compose_config(&stack, mode, a.period, s);
    if let Some(w) = a.seam_window {
        cfg.seam_window = w;
    }
    let prompts: Vec<Option<String>> = if a.prompt.is_empty() {
        vec![None]
    } else {
        a.prompt.iter().cloned().map(Some).collect()
    };
    let length = a.length.unwrap_or(DEFAULT_EXTEND_LENGTH);
    let long = generate_long(&stack, &prompts, length, &cfg)?;
    save_motion(&long.clip, &out)?;
    let resolved = json!({
        "mode": mode,
        "sampler": cfg.sampler,
        "period_frames": cfg.period_frames,
        "seam_window": cfg.seam_window,
        "length": length,
        "plan": long.plan,
        "diffusion_calls": long.log.diffusion_calls,
    });
    write_run_config(&out, "extend", Some(cfg.sampler.seed), a, &resolved, &[("ckpt", &ckpt)])
}

pub fn blend_cmd(a: &BlendArgs) -> Result<()> {
    let ckpt = require(&a.ckpt, "ckpt")?;
    let pa = require(&a.a, "a")?;
    let pb = require(&a.b, "b")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("blend.json"));
    let window = a.window.unwrap_or(20);
    let stack = load_stack(&ckpt)?;
    let codec = &stack.codec;
    let (ca, cb) = (load_clip(&pa)?, load_clip(&pb)?);
    if ca.fps != cb.fps {
        return Err(validation(format!("clips differ in frame rate: {} vs {}", ca.fps, cb.fps)));
    }
    let (sa, sb) = (clip_signal(codec, &ca)?, clip_signal(codec, &cb)?);
    let mixed = match a.start {
        Some(start) => blend_at(&sa, &sb, start, window)?,
        None => blend(&sa, &sb, window)?,
    };
    let clip = codec.decode(&mixed, ca.fps, cb.text.clone())?;
    save_motion(&clip, &out)?;
    let resolved = json!({ "window": window, "start": a.start });
    write_run_config(&out, "blend", None, a, &resolved, &[("ckpt", &ckpt), ("a", &pa), ("b", &pb)])
}

pub fn interp(a: &InterpArgs) -> Result<()> {
    let ckpt = require(&a.ckpt, "ckpt")?;
    let input = require(&a.input, "in")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("interp.json"));
    let factor = a.factor.unwrap_or(2);
    let stack = load_stack(&ckpt)?;
    let codec = &stack.codec;
    let clip = load_clip(&input)?;
    let (t_s, t_e) = clip_segment(&clip)?;
    let x = codec.encode(&clip, t_s, t_e)?;
    let period = (t_e - t_s) as f64;
    let signal = interpolate(&x, &codec.freqs, codec.config.repr, period, factor, clip.len())?;
    let mut feats = decode_interpolated(codec, &signal, factor)?;
    // root displacements are per frame, and frames are now `factor` times denser
    for c in [0, 2] {
        feats.column_mut(c).mapv_inplace(|v| v / factor as f64);
    }
    let dense = PoseFeatures::to_clip(feats.view(), &codec.skeleton, clip.fps * factor as f64, clip.text.clone())?;
    save_motion(&dense, &out)?;
    let resolved = json!({ "factor": factor, "t_s": t_s, "t_e": t_e });
    write_run_config(&out, "interp", None, a, &resolved, &[("ckpt", &ckpt), ("in", &input)])
}

fn parse_cell(s: &str) -> Result<eval::ReconCell> {
    let parts: Vec<&str> = s.split(':').collect();
    let [f, r, m] = parts[..] else {
        return Err(usage(format!("--cells: expected f_max:repr:phases, got {s:?}")));
    };
    let f = f.parse().map_err(|_| usage(format!("--cells: bad f_max in {s:?}")))?;
    let m = m.parse().map_err(|_| usage(format!("--cells: bad phase count in {s:?}")))?;
    Ok(eval::ReconCell::new(f, Representation::parse(r)?, m))
}

/// Train (or fetch from `PHASEGEN_CACHE`) and score every cell.
fn recon_reports(
    data: &MotionDataset,
    data_hash: &str,
    grid: &[eval::ReconCell],
    train: &AeTrainConfig,
) -> Result<Vec<eval::MetricReport>> {
    let Some(cache) = cache_dir() else {
        return Ok(eval::recon_study(data, grid, &CodecConfig::default(), train));
    };
    let mut out = Vec::with_capacity(grid.len());
    for &cell in grid {
        let key = json!({ "cell": cell, "train": train, "data": data_hash }).to_string();
        let digest = {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(key.as_bytes()))
        };
        let dir = cache.join(format!("codec-{}", &digest[..16]));
        let report_path = dir.join("report.json");
        if report_path.exists() {
            let text = std::fs::read_to_string(&report_path)?;
            out.push(eval::MetricReport::from_json(&text)?);
            continue;
        }
        match eval::recon_cell(data, cell, &CodecConfig::default(), train) {
            Ok((codec, report)) => {
                codec.save(&dir, None)?;
                report.write(&report_path)?;
                out.push(report);
            }
            Err(e) => {
                let mut r = eval::MetricReport::new(&format!("recon-study/{}", cell.label()), train.seed, &cell);
                r.notes.push(format!("cell failed: {e}"));
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn test_prompts(data: &MotionDataset) -> Vec<String> {
    let mut p: Vec<String> = data.iter_split(Split::Test).filter_map(|c| c.text.clone()).collect();
    p.sort();
    p.dedup();
    p
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let study = a.study.ok_or_else(|| {
        usage("the following required argument was not provided: <STUDY> (recon-study, transition-study, guidance-sweep or timing)")
    })?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    let seed = a.seed.unwrap_or(0);
    let mut s = SamplerConfig { seed, ..SamplerConfig::default() };
    if let Some(n) = a.sampling_steps {
        s.steps = n;
    }
    if let Some(g) = a.guidance {
        s.guidance = g;
    }
    s.validate()?;
    let mut inputs: Vec<(&str, PathBuf)> = Vec::new();
    let reports = match study {
        Study::ReconStudy => {
            let data_dir = require(&a.data, "data")?;
            let data = load_dataset(&data_dir)?;
            let grid = match &a.cells {
                Some(c) => c.split(',').map(|v| parse_cell(v.trim())).collect::<Result<Vec<_>>>()?,
                None => eval::default_grid(),
            };
            let train = AeTrainConfig {
                epochs: a.epochs.unwrap_or(AeTrainConfig::default().epochs),
                seed,
                ..AeTrainConfig::default()
            };
            let reports = recon_reports(&data, &hash_path(&data_dir)?, &grid, &train)?;
            inputs.push(("data", data_dir));
            reports
        }
        Study::TransitionStudy => {
            let ckpt = require(&a.ckpt, "ckpt")?;
            let data_dir = require(&a.data, "data")?;
            let (stack, data) = (load_stack(&ckpt)?, load_dataset(&data_dir)?);
            let pairs = eval::prompt_pairs(&test_prompts(&data), a.pairs.unwrap_or(32), seed);
            let cfg = eval::TransitionConfig { sampler: s, seed, ..eval::TransitionConfig::default() };
            let r = eval::transition_study(&stack, &data, &pairs, &cfg)?;
            inputs.extend([("ckpt", ckpt), ("data", data_dir)]);
            vec![r]
        }
        Study::GuidanceSweep => {
            let ckpt = require(&a.ckpt, "ckpt")?;
            let data_dir = require(&a.data, "data")?;
            let (stack, data) = (load_stack(&ckpt)?, load_dataset(&data_dir)?);
            let mut cfg = eval::GuidanceConfig { sampler: s, seed, ..eval::GuidanceConfig::default() };
            if let Some(v) = &a.scales {
                cfg.scales = parse_list(v, "scales")?;
            }
            let r = eval::guidance_sweep(&stack, &data, &test_prompts(&data), &cfg)?;
            inputs.extend([("ckpt", ckpt), ("data", data_dir)]);
            vec![r]
        }
        Study::Timing => {
            let ckpt = require(&a.ckpt, "ckpt")?;
            let stack = load_stack(&ckpt)?;
            let mut cfg = eval::TimingConfig { sampler: s, ..eval::TimingConfig::default() };
            if let Some(v) = &a.lengths {
                cfg.lengths = parse_list(v, "lengths")?;
            }
            if let Some(n) = a.runs {
                cfg.runs = n;
            }
            let r = eval::timing_profile(&stack, &cfg)?;
            inputs.push(("ckpt", ckpt));
            vec![r]
        }
    };
    ensure_parent(&out)?;
    eval::write_reports(&reports, &out)?;
    let checkpoints: Vec<(&str, &Path)> = inputs.iter().map(|(k, p)| (*k, p.as_path())).collect();
    let resolved: Value = json!({ "study": study, "reports": reports.iter().map(|r| &r.config).collect::<Vec<_>>() });
    write_run_config(&out, "eval", Some(seed), a, &resolved, &checkpoints)
}

pub fn export_anim(a: &ExportArgs) -> Result<()> {
    let input = require(&a.input, "in")?;
    let out = require(&a.out, "out")?;
    let format = a.format.unwrap_or(ExportFormat::Csv);
    let clip = load_clip(&input)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match format {
        ExportFormat::Csv => {
            export::write_csv(&clip, &out)?;
        }
        ExportFormat::FramesPng => {
            export::write_frames(&clip, &out)?;
        }
        ExportFormat::StickMp4Script => {
            export::write_manifest(&clip, &out)?;
        }
    }
    write_run_config(&out, "export-anim", None, a, &json!({ "format": format }), &[("in", &input)])
}
