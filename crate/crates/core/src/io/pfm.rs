//! Portable Float Map: `PF` (RGB) or `Pf` (grey), little-endian only.
//!
//! Header is `PF\n<w> <h>\n-1.0\n`; rows follow bottom-to-top as 32-bit
//! floats. Writing requires every value to be exactly representable as
//! `f32`, so a write/read cycle returns bit-identical pixel data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RadianceImage;

fn encode(w: usize, h: usize, c: usize, data: &[f64]) -> Result<Vec<u8>> {
    let magic = match c {
        3 => "PF",
        1 => "Pf",
        _ => return Err(Error::Pfm(format!("cannot store {c} channels"))),
    };
    if data.len() != w * h * c {
        return Err(Error::Pfm(format!("{} values for a {w}×{h}×{c} map", data.len())));
    }
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * c * 4);
    let row = w * c;
    for y in (0..h).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm_bytes(image: &RadianceImage) -> Result<Vec<u8>> {
    if let Some(v) = image.data().iter().find(|v| (**v as f32) as f64 != **v) {
        return Err(Error::Pfm(format!(
            "value {v:e} is not representable as f32; round the image first"
        )));
    }
    let (w, h, c) = image.shape();
    encode(w, h, c, image.data())
}

/// Writes an arbitrary finite float map (values may be negative), rounding
/// each value to the nearest `f32`.
pub fn write_float_map(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    channels: usize,
    values: &[f64],
) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Pfm(format!("cannot store non-finite value {v}")));
    }
    fs::write(path, encode(width, height, channels, values)?)?;
    Ok(())
}

pub fn write_pfm(image: &RadianceImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_pfm_bytes(image)?)?;
    Ok(())
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Pfm("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Pfm("malformed header".into()))
}

pub fn read_pfm_bytes(bytes: &[u8]) -> Result<RadianceImage> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Pfm(format!("bad magic `{other}`"))),
    };
    let dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::Pfm(format!("bad dimension `{s}`")))
    };
    let w = dim(token(bytes, &mut pos)?)?;
    let h = dim(token(bytes, &mut pos)?)?;
    let scale_tok = token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::Pfm(format!("bad scale `{scale_tok}`")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::Pfm(format!("bad scale `{scale_tok}`")));
    }
    if scale > 0.0 {
        return Err(Error::Pfm("big-endian unsupported".into()));
    }
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Pfm("truncated header".into()));
    }
    pos += 1;
    let count = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Pfm("dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < count * 4 {
        return Err(Error::Pfm(format!(
            "truncated payload: {} of {} bytes",
            payload.len(),
            count * 4
        )));
    }
    if payload.len() > count * 4 {
        return Err(Error::Pfm(format!(
            "{} trailing bytes after payload",
            payload.len() - count * 4
        )));
    }
    let row = w * channels;
    let mut data = vec![0.0f64; count];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let (file_row, col) = (i / row, i % row);
        let y = h - 1 - file_row;
        if !v.is_finite() {
            return Err(Error::Pfm(format!(
                "non-finite value at pixel ({}, {y})",
                col / channels
            )));
        }
        data[y * row + col] = v as f64;
    }
    RadianceImage::new(w, h, channels, data).map_err(|e| Error::Pfm(e.to_string()))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<RadianceImage> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| Error::Pfm(format!("{}: {e}", path.display())))?;
    read_pfm_bytes(&bytes)
}
