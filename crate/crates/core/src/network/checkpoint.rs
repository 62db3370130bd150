//! Checkpoint layout: u32 LE header length, JSON header, then the SCR1
//! encoded parameter tensors back to back. Header offsets are relative to
//! the first byte after the header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, LayerStack};
use crate::error::{Error, Result};
use crate::tensor::{io, Scalar};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    input_shape: Vec<usize>,
    penultimate: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    spec: LayerSpec,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    offset: usize,
    bytes: usize,
    shape: Vec<usize>,
}

const FORMAT: &str = "score-checkpoint/1";

pub fn checkpoint_bytes<T: Scalar>(model: &LayerStack<T>) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut layers = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let mut params = Vec::new();
        for p in &layer.params {
            let offset = payload.len();
            io::encode(p, &mut payload);
            params.push(ParamEntry {
                offset,
                bytes: payload.len() - offset,
                shape: p.shape().to_vec(),
            });
        }
        layers.push(LayerEntry {
            spec: layer.spec.clone(),
            params,
        });
    }
    let header = serde_json::to_vec(&Header {
        format: FORMAT.into(),
        input_shape: model.input_shape.clone(),
        penultimate: model.penultimate,
        layers,
    })?;
    let mut out = Vec::with_capacity(4 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<LayerStack<T>> {
    let len_bytes = bytes
        .get(..4)
        .ok_or_else(|| Error::Format("checkpoint too short".into()))?;
    let hlen = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(4..4 + hlen)
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format {:?}", header.format)));
    }
    let payload = &bytes[4 + hlen..];
    let specs: Vec<LayerSpec> = header.layers.iter().map(|l| l.spec.clone()).collect();
    let mut model = LayerStack::<T>::from_specs(&header.input_shape, specs, header.penultimate)?;
    for (layer, entry) in model.layers.iter_mut().zip(&header.layers) {
        if entry.params.len() != layer.params.len() {
            return Err(Error::Format("parameter count does not match layer spec".into()));
        }
        for (p, e) in layer.params.iter_mut().zip(&entry.params) {
            let chunk = payload
                .get(e.offset..e.offset + e.bytes)
                .ok_or_else(|| Error::Format("parameter offset out of range".into()))?;
            let t = io::from_bytes::<T>(chunk)?;
            if t.shape() != p.shape() || t.shape() != e.shape.as_slice() {
                return Err(Error::dim("checkpoint parameter", t.shape(), p.shape()));
            }
            *p = t;
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &LayerStack<T>, path: &Path) -> Result<()> {
    crate::fsutil::write_atomic(path, &checkpoint_bytes(model)?)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<LayerStack<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
