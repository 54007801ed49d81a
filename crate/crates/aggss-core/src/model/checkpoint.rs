//! Checkpoint container: `AGSSCKP1` magic, a JSON header describing the
//! model and its tensor manifest, then raw little-endian f32 data.
//!
//! Layout:
//! ```text
//! [0..8)   magic  b"AGSSCKP1"
//! [8..12)  u32 LE header length N
//! [12..12+N) JSON header (CheckpointMeta + tensor manifest)
//! [...]    tensor payloads, f32 LE, in manifest order
//! ```

use super::{build_model, IncrementalModel};
use crate::error::{Error, Result};
pub use crate::data::Normalization;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AGSSCKP1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub architecture: String,
    pub m: usize,
    pub class_counts: Vec<usize>,
    pub task_index: usize,
    pub seed: u64,
    pub input_size: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(
    model: &IncrementalModel,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut model = model.clone();
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    model.visit_state(&mut |name, value| {
        tensors.push(TensorInfo {
            name: name.to_string(),
            shape: value.shape().to_vec(),
        });
        for &v in value.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    });
    let header = Header {
        meta: meta.clone(),
        tensors,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(IncrementalModel, CheckpointMeta)> {
    let mut file = std::fs::File::open(path.as_ref())
        .map_err(|_| Error::MissingPath(path.as_ref().display().to_string()))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)?;
    if header.meta.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.meta.version
        )));
    }
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;

    let mut data: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    let mut off = 0usize;
    for info in &header.tensors {
        let n: usize = info.shape.iter().product();
        if off + n * 4 > rest.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} runs past end of file",
                info.name
            )));
        }
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let b = &rest[off + i * 4..off + i * 4 + 4];
            values.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        off += n * 4;
        data.insert(info.name.clone(), (info.shape.clone(), values));
    }

    let meta = header.meta;
    let counts = &meta.class_counts;
    if counts.is_empty() {
        return Err(Error::Checkpoint("empty class counts".into()));
    }
    let mut model = build_model(&meta.architecture, meta.m, counts[0], meta.seed)?;
    for &c in &counts[1..] {
        model.grow_classifiers(c);
    }
    let mut missing = Vec::new();
    model.visit_state(&mut |name, value| match data.remove(name) {
        Some((shape, values)) => {
            if shape != value.shape() {
                missing.push(format!("{name}: shape {shape:?} vs {:?}", value.shape()));
            } else {
                for (dst, src) in value.iter_mut().zip(values) {
                    *dst = src;
                }
            }
        }
        None => missing.push(format!("{name}: absent")),
    });
    if !missing.is_empty() {
        return Err(Error::Checkpoint(format!(
            "state mismatch: {}",
            missing.join("; ")
        )));
    }
    if !data.is_empty() {
        let extra: Vec<_> = data.keys().cloned().collect();
        return Err(Error::Checkpoint(format!(
            "unused tensors in checkpoint: {}",
            extra.join(", ")
        )));
    }
    Ok((model, meta))
}
