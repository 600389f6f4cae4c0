//! Clip exporters: joint-position CSV, stick-figure PNG frames and a render
//! manifest for external tools.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use phasegen_core::motion::{forward_kinematics, MotionClip, Vec3};
use serde::Serialize;

pub const CSV_FILE: &str = "joints.csv";
pub const MANIFEST_FILE: &str = "stick_manifest.json";
pub const FRAMES_DIR: &str = "frames";

fn positions(clip: &MotionClip) -> Result<Vec<Vec<Vec3>>> {
    clip.frames
        .iter()
        .map(|p| Ok(forward_kinematics(&clip.skeleton, p)?))
        .collect()
}

/// One row per frame: the frame index, then x, y, z of every joint.
pub fn csv_string(clip: &MotionClip) -> Result<String> {
    let mut s = String::from("frame");
    for name in &clip.skeleton.joint_names {
        write!(s, ",{name}_x,{name}_y,{name}_z").expect("string write");
    }
    s.push('\n');
    for (t, joints) in positions(clip)?.iter().enumerate() {
        write!(s, "{t}").expect("string write");
        for p in joints {
            write!(s, ",{},{},{}", p[0], p[1], p[2]).expect("string write");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_csv(clip: &MotionClip, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(CSV_FILE);
    std::fs::write(&path, csv_string(clip)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

const PANEL: u32 = 256;

fn draw_line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as u32) < img.width() && (y0 as u32) < img.height() {
            img.put_pixel(x0 as u32, y0 as u32, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Orthographic front (x-y) and side (z-y) views side by side, following
/// the root horizontally so the figure stays in frame.
pub fn write_frames(clip: &MotionClip, dir: &Path) -> Result<Vec<PathBuf>> {
    let frames_dir = dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).with_context(|| format!("creating {}", frames_dir.display()))?;
    let pos = positions(clip)?;
    let mut reach: f64 = 0.5;
    let mut top: f64 = 0.0;
    for (joints, pose) in pos.iter().zip(&clip.frames) {
        let r = pose.root_position;
        for p in joints {
            reach = reach.max((p[0] - r[0]).abs()).max((p[2] - r[2]).abs());
            top = top.max(p[1]);
        }
    }
    let extent = (2.0 * reach).max(top) * 1.1;
    let scale = f64::from(PANEL) / extent;
    let mut out = Vec::with_capacity(pos.len());
    for (t, (joints, pose)) in pos.iter().zip(&clip.frames).enumerate() {
        let mut img = RgbImage::from_pixel(2 * PANEL, PANEL, Rgb([250, 250, 250]));
        let r = pose.root_position;
        let ground = PANEL as i64 - 8;
        for x in 0..2 * PANEL {
            img.put_pixel(x, ground as u32, Rgb([200, 200, 200]));
        }
        for (panel, axis) in [(0u32, 0usize), (1, 2)] {
            let project = |p: &Vec3| {
                let u = f64::from(PANEL) / 2.0 + (p[axis] - r[axis]) * scale + f64::from(panel * PANEL);
                let v = ground as f64 - p[1] * scale;
                (u.round() as i64, v.round() as i64)
            };
            for (j, parent) in clip.skeleton.parents.iter().enumerate() {
                if let Some(pj) = parent {
                    draw_line(&mut img, project(&joints[*pj]), project(&joints[j]), Rgb([30, 60, 160]));
                }
            }
        }
        let path = frames_dir.join(format!("frame_{t:05}.png"));
        img.save_with_format(&path, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    fps: f64,
    joints: &'a [String],
    /// `-1` marks the root.
    parents: Vec<i64>,
    /// Per frame, per joint world position.
    frames: Vec<Vec<Vec3>>,
    /// Frame images expected by `command`, relative to the manifest.
    frame_pattern: &'a str,
    command: String,
}

/// Everything a renderer needs: skeleton topology, world positions per
/// frame, and an ffmpeg command that turns exported frames into a video.
pub fn write_manifest(clip: &MotionClip, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let pattern = "frames/frame_%05d.png";
    let m = Manifest {
        format: "phasegen-stick/1",
        fps: clip.fps,
        joints: &clip.skeleton.joint_names,
        parents: clip.skeleton.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
        frames: positions(clip)?,
        frame_pattern: pattern,
        command: format!("ffmpeg -framerate {} -i {pattern} -pix_fmt yuv420p stick.mp4", clip.fps),
    };
    std::fs::write(&path, serde_json::to_string_pretty(&m)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
