//! Tensor container files.
//!
//! Each tensor is stored in its own `<name>.pgt` file:
//!
//! ```text
//! offset  size        field
//! 0       4           magic  b"PGT1"
//! 4       4           ndim   u32 little-endian
//! 8       8 * ndim    dims   u64 little-endian, outermost first
//! ...     8 * prod    data   f64 little-endian IEEE-754, row-major
//! ```
//!
//! A [`ParamStore`] is saved as one file per tensor in a directory; the
//! manifest of names, shapes and order is the caller's `meta.json`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::params::ParamStore;
use crate::tape::Mat;

const MAGIC: &[u8; 4] = b"PGT1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("tensor {name} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: [usize; 2],
        expected: [usize; 2],
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_tensor(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 16 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Mat, CheckpointError> {
    let fail = |reason: &str| CheckpointError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(fail("bad magic"));
    }
    let ndim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if !(1..=2).contains(&ndim) {
        return Err(fail("only 1-D and 2-D tensors are supported"));
    }
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(fail("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize)
        .collect();
    let (rows, cols) = if ndim == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
    let count = rows.checked_mul(cols).ok_or_else(|| fail("shape overflow"))?;
    if bytes.len() != header + 8 * count {
        return Err(fail("data length does not match shape"));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| fail(&e.to_string()))
}

pub fn write_tensor(path: &Path, m: &Mat) -> Result<(), CheckpointError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_tensor(m)).map_err(io_err(path))
}

pub fn read_tensor(path: &Path) -> Result<Mat, CheckpointError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(io_err(path))?;
    decode_tensor(&buf, path)
}

fn tensor_path(dir: &Path, prefix: &str, name: &str) -> PathBuf {
    dir.join(format!("{prefix}{name}.pgt"))
}

/// Write every tensor of `store` as `<dir>/<prefix><name>.pgt`.
pub fn save_store(dir: &Path, prefix: &str, store: &ParamStore) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (_, name, value) in store.iter() {
        write_tensor(&tensor_path(dir, prefix, name), value)?;
    }
    Ok(())
}

/// Overwrite every tensor of `store` from files written by [`save_store`].
/// Shapes must match the freshly constructed store.
pub fn load_store(dir: &Path, prefix: &str, store: &mut ParamStore) -> Result<(), CheckpointError> {
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let m = read_tensor(&tensor_path(dir, prefix, &name))?;
        let target = store.get_mut(id);
        if m.dim() != target.dim() {
            return Err(CheckpointError::Shape {
                name,
                found: [m.nrows(), m.ncols()],
                expected: [target.nrows(), target.ncols()],
            });
        }
        *target = m;
    }
    Ok(())
}
