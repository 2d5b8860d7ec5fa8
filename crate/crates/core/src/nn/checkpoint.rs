//! Raw little-endian `f64` checkpoints with a JSON layout sidecar.
//!
//! The binary file holds the extractor followed by the head. The sidecar
//! (`<path>.json`) records the dimensions and every tensor's name, shape and
//! offset so the file can be read without this crate.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{ExtractorLayout, ExtractorParams, HeadParams, ModelDims};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f64` elements from the start of the file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayout {
    pub dims: ModelDims,
    pub dtype: String,
    pub byte_order: String,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointLayout {
    pub fn new(dims: ModelDims) -> Self {
        let layout = ExtractorLayout::new(dims);
        let mut tensors: Vec<TensorEntry> = layout
            .entries(dims)
            .into_iter()
            .map(|(name, shape, offset)| TensorEntry {
                name: name.to_string(),
                shape,
                offset,
            })
            .collect();
        let pe = layout.total;
        tensors.push(TensorEntry {
            name: "head.weight".into(),
            shape: vec![dims.embed, dims.classes],
            offset: pe,
        });
        tensors.push(TensorEntry {
            name: "head.bias".into(),
            shape: vec![dims.classes],
            offset: pe + dims.embed * dims.classes,
        });
        Self {
            dims,
            dtype: "f64".into(),
            byte_order: "little".into(),
            tensors,
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_checkpoint(path: &Path, extractor: &ExtractorParams, head: &HeadParams) -> Result<()> {
    let dims = extractor.dims();
    if head.dims != dims {
        return Err(Error::Consistency("extractor and head dimensions differ".into()));
    }
    let mut bytes = Vec::with_capacity(8 * (extractor.len() + head.len()));
    for v in extractor.as_slice().iter().chain(head.as_slice()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    let json = serde_json::to_string_pretty(&CheckpointLayout::new(dims))
        .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ExtractorParams, HeadParams)> {
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let layout: CheckpointLayout = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let dims = layout.dims;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = dims.model_len() * 8;
    if bytes.len() != expected {
        return Err(Error::Shape {
            expected,
            got: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let pe = dims.extractor_len();
    let mut extractor = ExtractorParams::zeros(dims);
    extractor.set_flat(&values[..pe])?;
    let mut head = HeadParams::zeros(dims);
    head.set_flat(&values[pe..])?;
    Ok((extractor, head))
}
