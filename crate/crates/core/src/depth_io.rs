//! Raw depth import and export.
//!
//! The native format is `STSD`: a 16-byte little-endian header
//! (`b"STSD"`, `u32` width, `u32` height, `f32` pixel pitch in meters)
//! followed by `width × height` `f32` depths in meters, row-major.
//! 16-bit binary PGM is also accepted given a meters-per-level scale.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::geometry::{DepthGrid, HeightField};

pub const STSD_MAGIC: &[u8; 4] = b"STSD";
const HEADER_LEN: usize = 16;

pub fn encode_stsd(width: usize, height: usize, pixel_pitch: f64, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(STSD_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(pixel_pitch as f32).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn encode_height_field(hf: &HeightField) -> Vec<u8> {
    encode_stsd(hf.width(), hf.height(), hf.pixel_pitch(), hf.values())
}

pub fn decode_stsd(bytes: &[u8]) -> Result<DepthGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::DepthFormat(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != STSD_MAGIC {
        return Err(Error::DepthFormat("missing STSD magic".into()));
    }
    let word = |at: usize| [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]];
    let width = u32::from_le_bytes(word(4)) as usize;
    let height = u32::from_le_bytes(word(8)) as usize;
    let pitch = f32::from_le_bytes(word(12)) as f64;

    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::DepthFormat(format!("{width}x{height} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::DepthFormat(format!(
            "{width}x{height} grid needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthGrid::new(width, height, pitch, values)
}

/// Decode a 16-bit PGM; each gray level is `meters_per_level` meters deep.
pub fn decode_pgm16(bytes: &[u8], meters_per_level: f64, pixel_pitch: f64) -> Result<DepthGrid> {
    if !(meters_per_level.is_finite() && meters_per_level > 0.0) {
        return Err(Error::param("meters_per_level", "must be a positive scale"));
    }
    let img = image::load(Cursor::new(bytes), ImageFormat::Pnm)
        .map_err(|e| Error::DepthFormat(format!("PGM decode failed: {e}")))?;
    let DynamicImage::ImageLuma16(gray) = img else {
        return Err(Error::DepthFormat("expected a 16-bit grayscale PGM".into()));
    };
    let (w, h) = gray.dimensions();
    let values = gray.pixels().map(|p| p.0[0] as f64 * meters_per_level).collect();
    DepthGrid::new(w as usize, h as usize, pixel_pitch, values)
}

/// Load a depth file, choosing the decoder from the extension
/// (`.pgm` → PGM, anything else → STSD).
pub fn load_depth(path: &Path, meters_per_level: f64, pgm_pixel_pitch: f64) -> Result<DepthGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        decode_pgm16(&bytes, meters_per_level, pgm_pixel_pitch)
    } else {
        decode_stsd(&bytes)
    }
}
