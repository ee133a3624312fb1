//! Binary PGM (P5) and PPM (P6) images, maxval 255.
//!
//! These two formats are implementable from scratch in any language, which
//! keeps the evaluation harness free of image decoders; converting a dataset
//! into them is the caller's preprocessing step. Pixel values load scaled to
//! `[0,1]`; masks binarize at the byte value 128.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::Path;

struct Header {
    width: usize,
    height: usize,
    payload_at: usize,
}

fn parse_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Skips whitespace and `#` comments between header fields.
fn skip_separators(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_separators(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(parse_err(start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("digits are ASCII");
    let value: usize = text
        .parse()
        .map_err(|e| parse_err(start, format!("bad {what}: {e}")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(parse_err(
            0,
            format!(
                "bad magic, expected {}",
                std::str::from_utf8(magic).unwrap()
            ),
        ));
    }
    let (width, pos) = read_number(bytes, 2, "width")?;
    let (height, pos) = read_number(bytes, pos, "height")?;
    let (maxval, pos) = read_number(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(2, "zero image extent"));
    }
    if maxval != 255 {
        return Err(parse_err(pos, format!("maxval must be 255, got {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(pos, "expected single whitespace before payload"));
    }
    let payload_at = pos + 1;
    let need = width * height * channels;
    if bytes.len() - payload_at != need {
        return Err(parse_err(
            payload_at,
            format!(
                "payload has {} bytes, expected {need}",
                bytes.len() - payload_at
            ),
        ));
    }
    Ok(Header {
        width,
        height,
        payload_at,
    })
}

/// Loads a grayscale P5 image as `[1,H,W]` with values in `[0,1]`.
pub fn load_image_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let h = parse_header(&bytes, b"P5", 1)?;
    let data = bytes[h.payload_at..]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Tensor::new(&[1, h.height, h.width], data)
}

/// Loads a P5 mask as `[1,H,W]` with values in {0,1}: bytes >= 128 are 1.
pub fn load_mask_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let h = parse_header(&bytes, b"P5", 1)?;
    let data = bytes[h.payload_at..]
        .iter()
        .map(|&b| if b >= 128 { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(&[1, h.height, h.width], data)
}

/// Loads a color P6 image as planar `[3,H,W]` with values in `[0,1]`.
pub fn load_image_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let h = parse_header(&bytes, b"P6", 3)?;
    let plane = h.width * h.height;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in bytes[h.payload_at..].chunks_exact(3).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            data[c * plane + i] = b as f32 / 255.0;
        }
    }
    Tensor::new(&[3, h.height, h.width], data)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `[1,H,W]` (or `[H,W]`) tensor of `[0,1]` values as binary P5.
pub fn write_pgm(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let (h, w) = match t.shape() {
        [1, h, w] => (*h, *w),
        [h, w] => (*h, *w),
        other => {
            return Err(Error::dim(
                "write_pgm",
                format!("expects [1,H,W] or [H,W], got {other:?}"),
            ))
        }
    };
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(t.data().iter().map(|&v| quantize(v)));
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes a planar `[3,H,W]` tensor of `[0,1]` values as binary P6.
pub fn write_ppm(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let (h, w) = match t.shape() {
        [3, h, w] => (*h, *w),
        other => {
            return Err(Error::dim(
                "write_ppm",
                format!("expects [3,H,W], got {other:?}"),
            ))
        }
    };
    let plane = h * w;
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..plane {
        for c in 0..3 {
            bytes.push(quantize(t.data()[c * plane + i]));
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
