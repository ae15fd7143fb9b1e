//! Binary checkpoint format.
//!
//! ```text
//! "QASA1"                      5 bytes
//! metadata length              u64, little endian
//! metadata                     UTF-8 JSON (see below)
//! parameter data               f64 little endian, manifest order
//! ```
//!
//! The metadata object is
//! `{"format_version": 1, "config": ModelConfig, "parameters": [{"path", "kind", "shape", "offset"}]}`
//! where `offset` counts `f64` elements from the start of the data section.

use super::{Model, ModelConfig, ParamKind, ParamStore};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"QASA1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    kind: ParamKind,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    config: ModelConfig,
    parameters: Vec<ManifestEntry>,
}

pub fn write_checkpoint<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let mut offset = 0;
    let parameters = model
        .params()
        .entries()
        .iter()
        .map(|e| {
            let m = ManifestEntry {
                path: e.path.clone(),
                kind: e.kind,
                shape: e.tensor.shape().to_vec(),
                offset,
            };
            offset += e.tensor.numel();
            m
        })
        .collect();
    let meta = serde_json::to_vec(&Metadata {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        parameters,
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for e in model.params().entries() {
        for v in e.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)?;
    let meta: Metadata = serde_json::from_slice(&meta)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(Error::Checkpoint("truncated parameter data".into()));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut store = ParamStore::new();
    for e in meta.parameters {
        let numel: usize = e.shape.iter().product();
        let slice = values.get(e.offset..e.offset + numel).ok_or_else(|| {
            Error::Checkpoint(format!("parameter {} extends past end of data", e.path))
        })?;
        store.push(e.path, e.kind, Tensor::new(e.shape, slice.to_vec())?);
    }
    if store.num_scalars() != values.len() {
        return Err(Error::Checkpoint(format!(
            "manifest covers {} values, file holds {}",
            store.num_scalars(),
            values.len()
        )));
    }
    Model::from_parts(meta.config, store)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
