//! Flag/config-file merging, provenance records and checkpoint hashing.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::errors::{usage, validation};

pub const RUN_CONFIG: &str = "run_config.json";

fn unset(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Keys of the config file that apply to `command`: top-level keys, then
/// the keys of a nested object named after the command.
fn file_values(doc: &Value, command: &str) -> Result<Map<String, Value>> {
    let Value::Object(top) = doc else {
        return Err(validation("config file must hold a JSON object"));
    };
    let mut out: Map<String, Value> = top
        .iter()
        .filter(|(_, v)| !v.is_object())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if let Some(Value::Object(section)) = top.get(command) {
        for (k, v) in section {
            out.insert(k.clone(), v.clone());
        }
    }
    Ok(out)
}

/// Defaults from the config file under the flags given on the command line.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>, command: &str) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| validation(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut merged) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in file_values(&doc, command)? {
        if let Some(slot) = merged.get_mut(&k) {
            if unset(slot) {
                *slot = v;
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| validation(format!("config {}: {e}", path.display())))
}

pub fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| usage(format!("the following required argument was not provided: --{flag}")))
}

/// SHA-256 over every file of a checkpoint (or a single file), in path order.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in &files {
        let full = if rel.as_os_str().is_empty() { path.to_path_buf() } else { path.join(rel) };
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&full).with_context(|| format!("hashing {}", full.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, at: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if at.is_file() {
        out.push(at.strip_prefix(root).unwrap_or(at).to_path_buf());
        return Ok(());
    }
    for entry in std::fs::read_dir(at).with_context(|| format!("listing {}", at.display()))? {
        let p = entry?.path();
        if p.file_name().is_some_and(|n| n == RUN_CONFIG) {
            continue;
        }
        collect_files(root, &p, out)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunConfig<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    args: &'a A,
    /// Module configurations after defaults were filled in.
    resolved: &'a Value,
    checkpoints: Vec<(String, String)>,
    threads: Option<usize>,
}

/// Write the flags, resolved module configs, seed and input hashes next to
/// an artifact. `out` is a directory, or a file whose directory is used
/// with a `<stem>.run_config.json` name.
pub fn write_run_config<A: Serialize>(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    args: &A,
    resolved: &Value,
    checkpoints: &[(&str, &Path)],
) -> Result<()> {
    let checkpoints = checkpoints
        .iter()
        .map(|(name, p)| Ok((name.to_string(), hash_path(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let rc = RunConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        args,
        resolved,
        checkpoints,
        threads: threads()?,
    };
    let target = if out.is_dir() {
        out.join(RUN_CONFIG)
    } else {
        let stem = out.file_stem().map_or("out".into(), |s| s.to_string_lossy().into_owned());
        out.with_file_name(format!("{stem}.{RUN_CONFIG}"))
    };
    std::fs::write(&target, serde_json::to_string_pretty(&rc)?)
        .with_context(|| format!("writing {}", target.display()))?;
    Ok(())
}

/// Worker cap from `PHASEGEN_THREADS`.
pub fn threads() -> Result<Option<usize>> {
    match std::env::var("PHASEGEN_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(validation(format!("PHASEGEN_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

/// Artifact cache directory from `PHASEGEN_CACHE`.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("PHASEGEN_CACHE").map(PathBuf::from)
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Flags {
        length: Option<usize>,
        seed: Option<u64>,
        prompt: Vec<String>,
    }

    #[test]
    fn section_keys_override_top_level_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"length": 10, "seed": 1, "prompt": ["a"], "generate": {"length": 20}}"#).unwrap();
        let flags = Flags {
            length: None,
            seed: Some(5),
            prompt: vec![],
        };
        let got = merge(&flags, Some(&path), "generate").unwrap();
        assert_eq!(got, Flags { length: Some(20), seed: Some(5), prompt: vec!["a".into()] });
        assert_eq!(merge(&flags, Some(&path), "extend").unwrap().length, Some(10));
    }

    #[test]
    fn bad_config_files_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let flags = Flags { length: None, seed: None, prompt: vec![] };
        for text in ["not json", "[1, 2]", r#"{"length": "long"}"#] {
            std::fs::write(&path, text).unwrap();
            let err = merge(&flags, Some(&path), "generate").unwrap_err();
            assert_eq!(crate::errors::classify(&err), crate::errors::Kind::Validation, "{text}");
        }
    }

    #[test]
    fn hash_ignores_run_configs_and_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.bin"), [1u8, 2, 3]).unwrap();
        let h0 = hash_path(dir.path()).unwrap();
        std::fs::write(dir.path().join(RUN_CONFIG), "{}").unwrap();
        assert_eq!(hash_path(dir.path()).unwrap(), h0);
        std::fs::write(dir.path().join("w.bin"), [1u8, 2, 4]).unwrap();
        assert_ne!(hash_path(dir.path()).unwrap(), h0);
    }
}
