//! PTCKPT1 checkpoints.
//!
//! Layout: one line of JSON (`magic`, `seed`, `optimizer_step`, `params` as
//! ordered `{name, shape}` records, and a free-form `extra` object) ended by
//! `\n`, then every parameter as little-endian `f64` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::{ParamStore, Parameter};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::io::split_header;

pub const CHECKPOINT_MAGIC: &str = "PTCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub magic: String,
    pub seed: u64,
    pub optimizer_step: u64,
    pub params: Vec<ParamRecord>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub optimizer_step: u64,
    pub extra: serde_json::Value,
    pub store: ParamStore,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        magic: CHECKPOINT_MAGIC.into(),
        seed: ckpt.seed,
        optimizer_step: ckpt.optimizer_step,
        params: ckpt
            .store
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                shape: p.value.shape(),
            })
            .collect(),
        extra: ckpt.extra.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(ckpt.store.num_scalars() * 8);
    for p in ckpt.store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (line, payload) = split_header(bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(line)
        .map_err(|e| Error::MalformedHeader(format!("invalid checkpoint header: {e}")))?;
    if header.magic != CHECKPOINT_MAGIC {
        return Err(Error::MalformedHeader(format!(
            "magic {:?}, expected {CHECKPOINT_MAGIC:?}",
            header.magic
        )));
    }
    let expected: usize = header.params.iter().map(|r| r.shape.numel() * 8).sum();
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    let mut store = ParamStore::new();
    let mut offset = 0;
    for rec in header.params {
        let len = rec.shape.numel();
        let data: Vec<f64> = payload[offset * 8..(offset + len) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(offset + i));
        }
        offset += len;
        store.push(Parameter::new(rec.name, Tensor::from_vec(rec.shape, data)?));
    }
    Ok(Checkpoint {
        seed: header.seed,
        optimizer_step: header.optimizer_step,
        extra: header.extra,
        store,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write(path.as_ref(), &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&crate::io::read(path.as_ref())?)
}

/// Copies values from `src` into `dst`, matching names and shapes exactly.
pub fn restore_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} parameters, model expects {}",
            src.len(),
            dst.len()
        )));
    }
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return Err(Error::Shape(format!(
                "checkpoint parameter {} {} does not match {} {}",
                s.name,
                s.value.shape(),
                d.name,
                d.value.shape()
            )));
        }
        d.value = s.value.clone();
    }
    Ok(())
}
