//! PTMOD1 modality tensor container: a PTSEQ1-style JSON header line with a
//! `modality` key, followed by channel-major little-endian `f32` values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compression::{PcaTensor, TsrTensor};
use crate::error::{Error, Result};
use crate::io::{decode_f32_le, encode_f32_le, read, split_header, write};

pub const MODALITY_MAGIC: &str = "PTMOD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Pca,
    Tsr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModalityHeader {
    magic: String,
    modality: ModalityKind,
    n_c: usize,
    n_y: usize,
    n_x: usize,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

/// A decoded PTMOD1 file.
#[derive(Clone, Debug, PartialEq)]
pub enum ModalityFile {
    Pca { id: String, tensor: PcaTensor },
    Tsr { id: String, tensor: TsrTensor },
}

impl ModalityFile {
    pub fn kind(&self) -> ModalityKind {
        match self {
            ModalityFile::Pca { .. } => ModalityKind::Pca,
            ModalityFile::Tsr { .. } => ModalityKind::Tsr,
        }
    }

    pub fn into_pca(self) -> Result<PcaTensor> {
        match self {
            ModalityFile::Pca { tensor, .. } => Ok(tensor),
            ModalityFile::Tsr { .. } => Err(Error::MalformedHeader(
                "expected pca modality, found tsr".into(),
            )),
        }
    }

    pub fn into_tsr(self) -> Result<TsrTensor> {
        match self {
            ModalityFile::Tsr { tensor, .. } => Ok(tensor),
            ModalityFile::Pca { .. } => Err(Error::MalformedHeader(
                "expected tsr modality, found pca".into(),
            )),
        }
    }
}

pub fn encode_modality(file: &ModalityFile) -> Result<Vec<u8>> {
    let (header, data) = match file {
        ModalityFile::Pca { id, tensor } => (
            ModalityHeader {
                magic: MODALITY_MAGIC.into(),
                modality: ModalityKind::Pca,
                n_c: tensor.components(),
                n_y: tensor.n_y,
                n_x: tensor.n_x,
                id: id.clone(),
                singular_values: Some(tensor.singular_values.clone()),
                n_frames: Some(tensor.n_frames),
                degree: None,
                reference_time_s: None,
                epsilon: None,
            },
            &tensor.channels,
        ),
        ModalityFile::Tsr { id, tensor } => (
            ModalityHeader {
                magic: MODALITY_MAGIC.into(),
                modality: ModalityKind::Tsr,
                n_c: tensor.coefficients(),
                n_y: tensor.n_y,
                n_x: tensor.n_x,
                id: id.clone(),
                singular_values: None,
                n_frames: None,
                degree: Some(tensor.degree),
                reference_time_s: Some(tensor.reference_time_s),
                epsilon: Some(tensor.epsilon),
            },
            &tensor.channels,
        ),
    };
    if data.len() != header.n_c * header.n_y * header.n_x {
        return Err(Error::Shape("modality payload length".into()));
    }
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    encode_f32_le(data, &mut out);
    Ok(out)
}

pub fn decode_modality(bytes: &[u8]) -> Result<ModalityFile> {
    let (line, payload) = split_header(bytes)?;
    let h: ModalityHeader = serde_json::from_slice(line)
        .map_err(|e| Error::MalformedHeader(format!("invalid header json: {e}")))?;
    if h.magic != MODALITY_MAGIC {
        return Err(Error::MalformedHeader(format!("magic {:?}", h.magic)));
    }
    if h.n_c == 0 || h.n_y == 0 || h.n_x == 0 {
        return Err(Error::Invariant("empty modality tensor".into()));
    }
    let channels = decode_f32_le(payload, h.n_c * h.n_y * h.n_x)?;
    let missing = |key: &str| Error::MalformedHeader(format!("missing {key}"));
    Ok(match h.modality {
        ModalityKind::Pca => {
            let singular_values = h.singular_values.ok_or_else(|| missing("singular_values"))?;
            if singular_values.len() != h.n_c {
                return Err(Error::MalformedHeader("singular value count".into()));
            }
            ModalityFile::Pca {
                id: h.id,
                tensor: PcaTensor {
                    n_y: h.n_y,
                    n_x: h.n_x,
                    channels,
                    singular_values,
                    n_frames: h.n_frames.ok_or_else(|| missing("n_frames"))?,
                },
            }
        }
        ModalityKind::Tsr => {
            let degree = h.degree.ok_or_else(|| missing("degree"))?;
            if degree + 1 != h.n_c {
                return Err(Error::MalformedHeader("degree/channel mismatch".into()));
            }
            ModalityFile::Tsr {
                id: h.id,
                tensor: TsrTensor {
                    n_y: h.n_y,
                    n_x: h.n_x,
                    degree,
                    channels,
                    reference_time_s: h.reference_time_s.ok_or_else(|| missing("reference_time_s"))?,
                    epsilon: h.epsilon.ok_or_else(|| missing("epsilon"))?,
                },
            }
        }
    })
}

pub fn save_modality(file: &ModalityFile, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_modality(file)?)
}

pub fn load_modality(path: impl AsRef<Path>) -> Result<ModalityFile> {
    decode_modality(&read(path.as_ref())?)
}
