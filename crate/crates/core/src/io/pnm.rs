//! Binary PGM (P5) and PPM (P6) images, plus PNG input behind the `png` feature.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Decodes a P5 or P6 file. Samples are divided by the header's maxval.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic '{other}'"))),
    };
    let width = number(bytes, &mut pos)?;
    let height = number(bytes, &mut pos)?;
    let maxval = number(bytes, &mut pos)?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!("PNM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let wide = maxval > 255;
    let count = width * height * channels;
    let need = count * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PNM raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos))))?;
    let scale = maxval as f64;
    let sample = |i: usize| -> f64 {
        let raw = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
        } else {
            raster[i] as f64
        };
        (raw / scale).min(1.0)
    };
    let plane = width * height;
    let mut pixels = vec![0.0; count];
    for i in 0..plane {
        for c in 0..channels {
            pixels[c * plane + i] = sample(i * channels + c);
        }
    }
    Image::new(width, height, channels, pixels)
}

/// Encodes an image as 8-bit P5 (gray) or P6 (RGB).
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let plane = img.width() * img.height();
    let px = img.pixels();
    out.reserve(plane * img.channels());
    for i in 0..plane {
        for c in 0..img.channels() {
            out.push((px[c * plane + i] * 255.0).round() as u8);
        }
    }
    out
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("PNM header ended early".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let t = token(bytes, pos)?;
    t.parse()
        .map_err(|_| Error::Format(format!("bad PNM header field '{t}'")))
}

#[cfg(feature = "png")]
fn decode_png(path: &Path) -> Result<Image> {
    let img = ::image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw): (usize, Vec<u16>) = if img.color().has_color() {
        (3, img.into_rgb16().into_raw())
    } else {
        (1, img.into_luma16().into_raw())
    };
    let plane = w * h;
    let mut pixels = vec![0.0; raw.len()];
    for i in 0..plane {
        for c in 0..channels {
            pixels[c * plane + i] = raw[i * channels + c] as f64 / 65535.0;
        }
    }
    Image::new(w, h, channels, pixels)
}

/// Reads an image by extension: `.pgm`, `.ppm`, `.pnm`, and `.png` with
/// the `png` feature.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" => decode_pnm(&std::fs::read(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        #[cfg(feature = "png")]
        "png" => decode_png(path),
        _ => Err(Error::Format(format!("unsupported image file {}", path.display()))),
    }
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pnm(img))?;
    Ok(())
}

/// Extensions accepted by [`read_image`].
pub fn is_image_file(path: &Path) -> bool {
    let exts: &[&str] = if cfg!(feature = "png") {
        &["pgm", "ppm", "pnm", "png"]
    } else {
        &["pgm", "ppm", "pnm"]
    };
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.contains(&e.to_ascii_lowercase().as_str()))
}
