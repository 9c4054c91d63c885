//! PTSEQ1 sequence container.
//!
//! Layout: one line of UTF-8 JSON (`magic`, `n_t`, `n_y`, `n_x`,
//! `frame_rate_hz`, `pulse_frame`, `id`, and `frame_times_s` only for
//! non-uniformly sampled sequences) terminated by a single `\n`, followed by
//! `n_t * n_y * n_x` little-endian `f32` samples, time-major then row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{decode_f32_le, encode_f32_le, split_header};
use crate::sequence::ThermalSequence;

pub const SEQUENCE_MAGIC: &str = "PTSEQ1";

#[derive(Serialize, Deserialize)]
struct SequenceHeader {
    magic: String,
    n_t: usize,
    n_y: usize,
    n_x: usize,
    frame_rate_hz: f64,
    pulse_frame: usize,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_times_s: Option<Vec<f64>>,
}

pub fn encode_sequence(seq: &ThermalSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let header = SequenceHeader {
        magic: SEQUENCE_MAGIC.to_string(),
        n_t: seq.n_t(),
        n_y: seq.n_y(),
        n_x: seq.n_x(),
        frame_rate_hz: seq.frame_rate_hz(),
        pulse_frame: seq.pulse_frame(),
        id: seq.id().to_string(),
        frame_times_s: seq.explicit_frame_times().map(<[f64]>::to_vec),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    encode_f32_le(seq.frames(), &mut out);
    Ok(out)
}

pub fn decode_sequence(bytes: &[u8]) -> Result<ThermalSequence> {
    let (line, payload) = split_header(bytes)?;
    let header: SequenceHeader = serde_json::from_slice(line)
        .map_err(|e| Error::MalformedHeader(format!("invalid header json: {e}")))?;
    if header.magic != SEQUENCE_MAGIC {
        return Err(Error::MalformedHeader(format!(
            "magic {:?}, expected {SEQUENCE_MAGIC:?}",
            header.magic
        )));
    }
    if header.n_t < 2 || header.n_y == 0 || header.n_x == 0 {
        return Err(Error::Invariant(format!(
            "header dimensions {}x{}x{}",
            header.n_t, header.n_y, header.n_x
        )));
    }
    let count = header
        .n_t
        .checked_mul(header.n_y)
        .and_then(|v| v.checked_mul(header.n_x))
        .ok_or_else(|| Error::MalformedHeader("dimension overflow".into()))?;
    let frames = decode_f32_le(payload, count)?;
    let seq = ThermalSequence::new(
        header.id,
        (header.n_t, header.n_y, header.n_x),
        header.frame_rate_hz,
        header.pulse_frame,
        frames,
    )?;
    match header.frame_times_s {
        Some(times) => seq.with_frame_times(times),
        None => Ok(seq),
    }
}

pub fn save_sequence(seq: &ThermalSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_sequence(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<ThermalSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sequence(&bytes)
}
