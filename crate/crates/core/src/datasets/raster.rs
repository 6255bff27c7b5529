//! Raster codecs.
//!
//! Native format: `SSLR`, then little-endian u32 C, H, W, then C·H·W little-endian
//! f32 values in band-major order. 8-bit PNG (1, 3 or 4 channels) is also accepted
//! and scaled to [0, 1].

use std::fs;
use std::path::Path;

use ndarray::Array3;

use super::DatasetError;

pub const RASTER_MAGIC: &[u8; 4] = b"SSLR";
const HEADER_LEN: usize = 16;

pub fn encode_raster(pixels: &Array3<f32>) -> Vec<u8> {
    let (c, h, w) = pixels.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * c * h * w);
    out.extend_from_slice(RASTER_MAGIC);
    for d in [c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in pixels.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<Array3<f32>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..4] != RASTER_MAGIC {
        return Err("bad magic".into());
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let count = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or("dimension overflow")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * count {
        return Err(format!(
            "expected {} payload bytes for {c}x{h}x{w}, found {}",
            4 * count,
            body.len()
        ));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite pixel value".into());
    }
    Ok(Array3::from_shape_vec((c, h, w), values).expect("length checked"))
}

pub fn write_raster(path: &Path, pixels: &Array3<f32>) -> Result<(), DatasetError> {
    fs::write(path, encode_raster(pixels)).map_err(|e| DatasetError::io(path, e))
}

/// Reads a raster by extension: `.png` through the PNG decoder, anything else as `SSLR`.
pub fn read_raster(path: &Path) -> Result<Array3<f32>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    let is_png = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("png"))
        .unwrap_or(false);
    let decoded = if is_png {
        decode_png(&bytes)
    } else {
        decode_raster(&bytes)
    };
    decoded.map_err(|reason| DatasetError::DecodeFailure {
        path: path.to_path_buf(),
        reason,
    })
}

fn decode_png(bytes: &[u8]) -> Result<Array3<f32>, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw): (usize, Vec<u8>) = match img.color() {
        image::ColorType::L8 => (1, img.into_luma8().into_raw()),
        image::ColorType::Rgb8 => (3, img.into_rgb8().into_raw()),
        image::ColorType::Rgba8 => (4, img.into_rgba8().into_raw()),
        other => return Err(format!("unsupported PNG color type {other:?}")),
    };
    // interleaved HWC -> band-major CHW
    let mut out = Array3::<f32>::zeros((channels, h, w));
    for (i, px) in raw.chunks_exact(channels).enumerate() {
        let (y, x) = (i / w, i % w);
        for (c, &v) in px.iter().enumerate() {
            out[[c, y, x]] = v as f32 / 255.0;
        }
    }
    Ok(out)
}
