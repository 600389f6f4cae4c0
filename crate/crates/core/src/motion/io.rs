//! Motion JSON files and dataset directories.
//!
//! A dataset directory holds one `clip_NNNNN.json` per clip and a
//! `manifest.json` listing each file with its split.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MotionClip, MotionDataset, Pose, Quat, Skeleton, Split, Vec3};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SkeletonJson {
    joints: Vec<String>,
    /// -1 marks the root.
    parents: Vec<i64>,
    offsets: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    root: Vec3,
    rot: Vec<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct ClipJson {
    fps: f64,
    skeleton: SkeletonJson,
    text: Option<String>,
    t_s: Option<usize>,
    t_e: Option<usize>,
    #[serde(rename = "t_T", default, skip_serializing_if = "Option::is_none")]
    original_len: Option<usize>,
    frames: Vec<FrameJson>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    clips: Vec<ManifestEntry>,
}

const MANIFEST: &str = "manifest.json";

fn to_json(clip: &MotionClip) -> ClipJson {
    ClipJson {
        fps: clip.fps,
        skeleton: SkeletonJson {
            joints: clip.skeleton.joint_names.clone(),
            parents: clip
                .skeleton
                .parents
                .iter()
                .map(|p| p.map_or(-1, |p| p as i64))
                .collect(),
            offsets: clip.skeleton.offsets.clone(),
        },
        text: clip.text.clone(),
        t_s: clip.t_s,
        t_e: clip.t_e,
        original_len: clip.original_len,
        frames: clip
            .frames
            .iter()
            .map(|f| FrameJson {
                root: f.root_position,
                rot: f.joint_rotations.iter().map(|q| q.to_array()).collect(),
            })
            .collect(),
    }
}

fn from_json(j: ClipJson, path: &Path) -> Result<MotionClip> {
    let parse = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let parents = j
        .skeleton
        .parents
        .iter()
        .enumerate()
        .map(|(i, &p)| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(parse(format!("skeleton.parents[{i}] = {p} is invalid"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let skeleton = Skeleton {
        joint_names: j.skeleton.joints,
        parents,
        offsets: j.skeleton.offsets,
    };
    let frames = j
        .frames
        .into_iter()
        .map(|f| Pose {
            root_position: f.root,
            joint_rotations: f.rot.into_iter().map(Quat::from_array).collect(),
        })
        .collect();
    let clip = MotionClip {
        skeleton,
        fps: j.fps,
        frames,
        text: j.text,
        t_s: j.t_s,
        t_e: j.t_e,
        original_len: j.original_len,
    };
    clip.validate().map_err(|e| parse(e.to_string()))?;
    Ok(clip)
}

pub fn clip_to_json(clip: &MotionClip) -> String {
    serde_json::to_string(&to_json(clip)).expect("clip serialization is infallible")
}

pub fn clip_from_json(text: &str, origin: &Path) -> Result<MotionClip> {
    let j: ClipJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    from_json(j, origin)
}

pub fn save_clip(clip: &MotionClip, path: &Path) -> Result<()> {
    fs::write(path, clip_to_json(clip)).map_err(Error::io(path))
}

pub fn load_clip(path: &Path) -> Result<MotionClip> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    clip_from_json(&text, path)
}

pub fn save_dataset(dataset: &MotionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, (clip, split)) in dataset.clips.iter().zip(&dataset.splits).enumerate() {
        let file = format!("clip_{i:05}.json");
        save_clip(clip, &dir.join(&file))?;
        entries.push(ManifestEntry { file, split: *split });
    }
    let manifest = Manifest {
        version: 1,
        clips: entries,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    fs::write(&path, text).map_err(Error::io(&path))
}

pub fn load_dataset(dir: &Path) -> Result<MotionDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let mut clips = Vec::with_capacity(manifest.clips.len());
    let mut splits = Vec::with_capacity(manifest.clips.len());
    for e in manifest.clips {
        clips.push(load_clip(&dir.join(&e.file))?);
        splits.push(e.split);
    }
    MotionDataset::new(clips, splits)
}
