//! On-disk formats: PTSEQ1 sequences, PTMOD1 modality tensors, PGM/PFM
//! ground truth and checkpoint helpers.

mod netpbm;
mod ptmod;
mod ptseq;

use std::fs;
use std::path::{Path, PathBuf};

pub use netpbm::{decode_pfm, decode_pgm, encode_pfm, encode_pgm};
pub use ptmod::{
    decode_modality, encode_modality, load_modality, save_modality, ModalityFile, ModalityKind,
    MODALITY_MAGIC,
};
pub use ptseq::{
    decode_sequence, encode_sequence, load_sequence, save_sequence, SEQUENCE_MAGIC,
};

use crate::error::{Error, Result};
use crate::sequence::{ClassDepths, GroundTruth};

pub(crate) fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header terminator".into()))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

pub(crate) fn encode_f32_le(values: &[f32], out: &mut Vec<u8>) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn decode_f32_le(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    let expected = count * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(values)
}

/// Paths of the three ground-truth files sharing `stem` inside `dir`.
pub fn ground_truth_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}_mask.pgm")),
        dir.join(format!("{stem}_depth.pfm")),
        dir.join(format!("{stem}_classes.json")),
    )
}

pub fn save_ground_truth(gt: &GroundTruth, dir: &Path, stem: &str) -> Result<()> {
    let (mask, depth, classes) = ground_truth_paths(dir, stem);
    write(&mask, &encode_pgm(gt.n_x, gt.n_y, &gt.class_mask)?)?;
    write(&depth, &encode_pfm(gt.n_x, gt.n_y, &gt.depth_map)?)?;
    let sidecar = ClassDepths {
        class_depths_mm: gt.class_depths.clone(),
    };
    write(&classes, &serde_json::to_vec_pretty(&sidecar)?)
}

pub fn load_ground_truth(dir: &Path, stem: &str) -> Result<GroundTruth> {
    let (mask, depth, classes) = ground_truth_paths(dir, stem);
    let (w, h, class_mask) = decode_pgm(&read(&mask)?)?;
    let (dw, dh, depth_map) = decode_pfm(&read(&depth)?)?;
    if (w, h) != (dw, dh) {
        return Err(Error::Shape(format!(
            "mask {w}x{h} vs depth {dw}x{dh} for {stem}"
        )));
    }
    let sidecar: ClassDepths = serde_json::from_slice(&read(&classes)?)?;
    Ok(GroundTruth {
        n_y: h,
        n_x: w,
        class_mask,
        depth_map,
        class_depths: sidecar.class_depths_mm,
    })
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
