use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasegen_core::motion::{forward_kinematics, load_clip};
use serde_json::Value;

fn phasegen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasegen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn phasegen")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = phasegen(dir, args);
    assert!(
        out.status.success(),
        "phasegen {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small corpus and a barely trained stack; enough to exercise plumbing.
fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-corpus", "--out", "corpus", "--per-family", "5", "--seed", "2"]);
    ok(d, &["train-ae", "--data", "corpus", "--out", "ae", "--epochs", "1", "--phases", "6", "--fmax", "4"]);
    ok(
        d,
        &[
            "train-diff", "--data", "corpus", "--ae", "ae", "--out", "stack", "--iterations", "3", "--width", "8",
            "--layers", "1", "--heads", "2", "--text-dim", "8",
        ],
    );
    tmp
}

fn frames(path: &Path) -> usize {
    load_clip(path).unwrap().len()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let w = workspace();
    let d = w.path();
    for out in ["a.json", "b.json"] {
        ok(
            d,
            &["generate", "--ckpt", "stack", "--prompt", "a person walks forward", "--length", "196", "--seed", "1", "--sampling-steps", "5", "--out", out],
        );
    }
    let (a, b) = (std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    assert_eq!(a, b);
    assert_eq!(frames(&d.join("a.json")), 196);
    let rc = json(&d.join("a.run_config.json"));
    assert_eq!(rc["seed"], 1);
    assert_eq!(rc["command"], "generate");
    assert_eq!(rc["checkpoints"][0][1].as_str().unwrap().len(), 64);
}

#[test]
fn missing_ckpt_is_a_usage_error_naming_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let out = phasegen(d.path(), &["generate", "--prompt", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--ckpt"), "{err}");
    assert!(err.contains("\"category\":\"usage\""), "{err}");

    // also when the config file leaves it out
    std::fs::write(d.path().join("cfg.json"), r#"{"prompt": "x"}"#).unwrap();
    let out = phasegen(d.path(), &["generate", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ckpt"));
}

#[test]
fn exit_codes_by_category() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(phasegen(d.path(), &["generate", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(phasegen(d.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(phasegen(d.path(), &["--help"]).status.code(), Some(0));
    ok(d.path(), &["gen-corpus", "--out", "c", "--per-family", "2"]);
    let out = phasegen(d.path(), &["train-ae", "--data", "c", "--out", "ae", "--repr", "cos"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"category\":\"validation\""));
    let out = phasegen(d.path(), &["generate", "--ckpt", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let out = phasegen(d.path(), &["gen-corpus", "--out", "c2", "--families", "swim"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn extend_lengths_and_call_counts() {
    let w = workspace();
    let d = w.path();
    ok(d, &["extend", "--ckpt", "stack", "--mode", "repetition", "--length", "588", "--sampling-steps", "3", "--out", "rep.json"]);
    assert_eq!(frames(&d.join("rep.json")), 588);
    assert_eq!(json(&d.join("rep.run_config.json"))["resolved"]["diffusion_calls"], 1);
    ok(
        d,
        &[
            "extend", "--ckpt", "stack", "--mode", "generative", "--prompt", "a person walks forward", "--prompt",
            "a person jumps", "--period", "196", "--length", "588", "--sampling-steps", "3", "--out", "gen.json",
        ],
    );
    assert_eq!(frames(&d.join("gen.json")), 588);
    assert_eq!(json(&d.join("gen.run_config.json"))["resolved"]["diffusion_calls"], 3);
}

#[test]
fn config_file_fills_unset_flags_and_flags_win() {
    let w = workspace();
    let d = w.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"ckpt": "stack", "sampling-steps": 3, "generate": {"length": 50, "seed": 4}, "extend": {"length": 99}}"#,
    )
    .unwrap();
    ok(d, &["generate", "--config", "run.json", "--out", "a.json"]);
    assert_eq!(frames(&d.join("a.json")), 50);
    let rc = json(&d.join("a.run_config.json"));
    assert_eq!(rc["resolved"]["sampler"]["seed"], 4);
    assert_eq!(rc["resolved"]["sampler"]["steps"], 3);
    ok(d, &["generate", "--config", "run.json", "--length", "60", "--out", "b.json"]);
    assert_eq!(frames(&d.join("b.json")), 60);
}

#[test]
fn blend_and_interp_outputs() {
    let w = workspace();
    let d = w.path();
    ok(d, &["blend", "--ckpt", "stack", "--a", "corpus/clip_00000.json", "--b", "corpus/clip_00007.json", "--window", "10", "--out", "bl.json"]);
    assert_eq!(frames(&d.join("bl.json")), frames(&d.join("corpus/clip_00007.json")));
    ok(d, &["interp", "--ckpt", "stack", "--in", "corpus/clip_00000.json", "--factor", "3", "--out", "in.json"]);
    let src = load_clip(&d.join("corpus/clip_00000.json")).unwrap();
    let dense = load_clip(&d.join("in.json")).unwrap();
    assert_eq!(dense.len(), 3 * src.len());
    assert_eq!(dense.fps, 3.0 * src.fps);
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn csv_export_matches_forward_kinematics() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    ok(d, &["gen-corpus", "--out", "c", "--per-family", "1"]);
    let clip_path = d.join("c/clip_00000.json");
    let clip = load_clip(&clip_path).unwrap();
    ok(d, &["export-anim", "--in", "c/clip_00000.json", "--out", "e1", "--format", "csv"]);
    ok(d, &["export-anim", "--in", "c/clip_00000.json", "--out", "e2", "--format", "csv"]);
    let (p1, p2) = (d.join("e1/joints.csv"), d.join("e2/joints.csv"));
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let (header, rows) = parse_csv(&p1);
    let j = clip.skeleton.num_joints();
    assert_eq!(header.len(), 3 * j + 1);
    assert_eq!(header[0], "frame");
    assert_eq!(header[1], format!("{}_x", clip.skeleton.joint_names[0]));
    assert_eq!(rows.len(), clip.len());
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 3 * j + 1);
        assert_eq!(row[0], t as f64);
        let fk = forward_kinematics(&clip.skeleton, &clip.frames[t]).unwrap();
        for (i, p) in fk.iter().enumerate() {
            for c in 0..3 {
                assert!((row[1 + 3 * i + c] - p[c]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn png_frames_and_render_manifest() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    ok(d, &["gen-corpus", "--out", "c", "--per-family", "1", "--frames", "60"]);
    ok(d, &["export-anim", "--in", "c/clip_00000.json", "--out", "png", "--format", "frames-png"]);
    let pngs: Vec<PathBuf> = std::fs::read_dir(d.join("png/frames")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(pngs.len(), 60);
    assert!(pngs.iter().all(|p| std::fs::read(p).unwrap().starts_with(b"\x89PNG")));
    ok(d, &["export-anim", "--in", "c/clip_00000.json", "--out", "m", "--format", "stick-mp4-script"]);
    let m = json(&d.join("m/stick_manifest.json"));
    assert_eq!(m["frames"].as_array().unwrap().len(), 60);
    assert_eq!(m["parents"][0], -1);
    assert!(m["command"].as_str().unwrap().starts_with("ffmpeg"));
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let b = std::fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn preprocess_annotates_a_copy_and_leaves_input_alone() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    ok(d, &["gen-corpus", "--out", "c", "--per-family", "2"]);
    let before = tree_bytes(&d.join("c"));
    ok(d, &["preprocess", "--in", "c", "--out", "p", "--top-w", "3", "--debug-dir", "dbg", "--debug-clips", "1"]);
    assert_eq!(before, tree_bytes(&d.join("c")));
    let pool = json(&d.join("p/clip_00000.pool.json"));
    let pool = pool.as_array().unwrap();
    assert!(!pool.is_empty() && pool.len() <= 3);
    let clip = load_clip(&d.join("p/clip_00000.json")).unwrap();
    assert_eq!(clip.t_s, pool[0]["t_s"].as_u64().map(|v| v as usize));
    assert!(d.join("dbg/clip_00000_loss.csv").exists());
    assert!(d.join("dbg/clip_00000_loss.png").exists());
    assert_eq!(phasegen(d, &["preprocess", "--in", "c", "--out", "c"]).status.code(), Some(3));
}

#[test]
fn threads_variable_is_validated() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_phasegen"))
        .current_dir(d.path())
        .env("PHASEGEN_THREADS", "zero")
        .args(["gen-corpus", "--out", "c", "--per-family", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
