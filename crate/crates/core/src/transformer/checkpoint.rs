//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "GCB1"
//! u32 config_len, config_len bytes of JSON (ModelConfig)
//! u32 tensor_count
//! per tensor:
//!   u32 name_len, name bytes (UTF-8)
//!   u8  dtype (0 = f32)
//!   u32 ndim, ndim × u32 dims
//!   prod(dims) × f32, row-major
//! ```

use std::io::{Read, Write};

use thiserror::Error;

use super::params::{init_params, ModelConfig, ModelParams};
use super::Float;

pub const MAGIC: &[u8; 4] = b"GCB1";
const DTYPE_F32: u8 = 0;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("tensor {name}: stored shape {stored:?} does not match config shape {expected:?}")]
    ShapeMismatch { name: String, stored: Vec<usize>, expected: Vec<usize> },
    #[error("unexpected tensor {0}")]
    UnknownTensor(String),
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "length exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn save_checkpoint<T: Float, W: Write>(params: &ModelParams<T>, mut w: W) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    let config = serde_json::to_vec(&params.config)?;
    write_u32(&mut w, config.len())?;
    w.write_all(&config)?;
    let tensors = params.named_tensors();
    write_u32(&mut w, tensors.len())?;
    for (name, t) in tensors {
        write_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[DTYPE_F32])?;
        write_u32(&mut w, t.ndim())?;
        for &d in t.shape() {
            write_u32(&mut w, d)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for x in t.iter() {
            buf.extend_from_slice(&x.to_f32().expect("float to f32").to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint, rejecting wrong magic bytes, unknown or missing
/// tensors and shapes that disagree with the embedded config.
pub fn load_checkpoint<R: Read>(mut r: R) -> Result<ModelParams<f32>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let len = read_u32(&mut r)?;
    let mut config = vec![0u8; len];
    r.read_exact(&mut config)?;
    let config: ModelConfig = serde_json::from_slice(&config)?;
    let mut params = init_params::<f32>(&config).map_err(|e| CheckpointError::Config(e.to_string()))?;

    let expected: Vec<(String, Vec<usize>)> =
        params.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    let mut filled = vec![false; expected.len()];
    let count = read_u32(&mut r)?;
    let mut slots = params.tensors_mut();
    for _ in 0..count {
        let name_len = read_u32(&mut r)?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8_lossy(&name).into_owned();
        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        if dtype[0] != DTYPE_F32 {
            return Err(CheckpointError::UnsupportedDtype(dtype[0]));
        }
        let ndim = read_u32(&mut r)?;
        let shape = (0..ndim).map(|_| read_u32(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
        let idx = expected
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| CheckpointError::UnknownTensor(name.clone()))?;
        if expected[idx].1 != shape {
            return Err(CheckpointError::ShapeMismatch { name, stored: shape, expected: expected[idx].1.clone() });
        }
        let mut payload = vec![0u8; shape.iter().product::<usize>() * 4];
        r.read_exact(&mut payload)?;
        let dst = slots[idx].as_slice_mut().expect("contiguous");
        for (x, chunk) in dst.iter_mut().zip(payload.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
        filled[idx] = true;
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        return Err(CheckpointError::MissingTensor(expected[i].0.clone()));
    }
    drop(slots);
    Ok(params)
}
