//! Binary PGM (P5, maxval 255) and little-endian PFM (`Pf`, scale -1.0).
//!
//! PFM rows are stored bottom-to-top as the format prescribes; buffers in
//! memory are always top-to-bottom row-major.

use crate::error::{Error, Result};

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "{} pixels for {width}x{height} pgm",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut cursor = HeaderCursor::new(bytes);
    if cursor.token()? != "P5" {
        return Err(Error::MalformedHeader("pgm magic is not P5".into()));
    }
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!("pgm maxval {maxval}")));
    }
    let payload = cursor.payload()?;
    if payload.len() != width * height {
        return Err(Error::PayloadSize {
            expected: width * height,
            found: payload.len(),
        });
    }
    Ok((width, height, payload.to_vec()))
}

pub fn encode_pfm(width: usize, height: usize, values: &[f32]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::Shape(format!(
            "{} values for {width}x{height} pfm",
            values.len()
        )));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut cursor = HeaderCursor::new(bytes);
    if cursor.token()? != "Pf" {
        return Err(Error::MalformedHeader("pfm magic is not Pf".into()));
    }
    let width = cursor.number()?;
    let height = cursor.number()?;
    let scale: f64 = cursor
        .token()?
        .parse()
        .map_err(|_| Error::MalformedHeader("pfm scale".into()))?;
    if scale >= 0.0 {
        return Err(Error::MalformedHeader(
            "only little-endian (negative scale) pfm is supported".into(),
        ));
    }
    let payload = cursor.payload()?;
    let rows = super::decode_f32_le(payload, width * height)?;
    let mut values = Vec::with_capacity(width * height);
    for row in (0..height).rev() {
        values.extend_from_slice(&rows[row * width..(row + 1) * width]);
    }
    Ok((width, height, values))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderCursor { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::MalformedHeader("truncated netpbm header".into())),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::MalformedHeader(format!("expected integer, found {tok:?}")))
    }

    /// Skips the single whitespace byte that ends the header.
    fn payload(self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::MalformedHeader("missing header terminator".into())),
        }
    }
}
