//! 8-bit PNG/JPEG decoding and encoding, plus a float PFM sidecar.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbaImage};

use crate::error::{Error, Result};
use crate::types::{Image, Mask};

fn missing(path: &Path) -> Error {
    Error::MissingPath(path.to_path_buf())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            missing(path)
        } else {
            e.into()
        }
    })
}

fn to_image(img: DynamicImage) -> Image {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect();
    Image::new(h as usize, w as usize, data).expect("decoded pixels are in range")
}

fn to_mask(img: DynamicImage) -> Mask {
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 255.0)
        .collect();
    Mask::new(h as usize, w as usize, data).expect("decoded pixels are in range")
}

/// Decodes a PNG or JPEG from memory to RGB in [0,1].
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    Ok(to_image(image::load_from_memory(bytes)?))
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(&read_bytes(path)?).map_err(|e| annotate(e, path))
}

/// Reads a mask as luma / 255 (colour files are converted to luma first).
pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = read_bytes(path)?;
    Ok(to_mask(
        image::load_from_memory(&bytes).map_err(|e| annotate(e.into(), path))?,
    ))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Image(inner) => Error::Format {
            path: path.display().to_string(),
            reason: inner.to_string(),
        },
        other => other,
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn png_bytes(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Grayscale 8-bit PNG of a probability map.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let buf = GrayImage::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.data().iter().map(|v| quantize(*v)).collect(),
    )
    .expect("buffer size matches");
    png_bytes(DynamicImage::ImageLuma8(buf))
}

/// RGBA PNG: the image colours with the mask as alpha.
pub fn encode_cutout_png(image: &Image, alpha: &Mask) -> Result<Vec<u8>> {
    if image.size() != alpha.size() {
        return Err(Error::Shape(format!(
            "cutout image {:?} vs alpha {:?}",
            image.size(),
            alpha.size()
        )));
    }
    let mut raw = Vec::with_capacity(alpha.len() * 4);
    for (px, a) in image.data().chunks_exact(3).zip(alpha.data()) {
        raw.extend(px.iter().map(|v| quantize(*v as f64)));
        raw.push(quantize(*a));
    }
    let buf = RgbaImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer size matches");
    png_bytes(DynamicImage::ImageRgba8(buf))
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

pub fn write_image_png(path: &Path, image: &Image) -> Result<()> {
    let raw = image.data().iter().map(|v| quantize(*v as f64)).collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer size matches");
    fs::write(path, png_bytes(DynamicImage::ImageRgb8(buf))?)?;
    Ok(())
}

/// Single-channel PFM (`Pf`, little endian, rows stored bottom to top),
/// keeping the unquantized probabilities.
pub fn encode_pfm(mask: &Mask) -> Vec<u8> {
    let (h, w) = mask.size();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for r in (0..h).rev() {
        for c in 0..w {
            out.extend_from_slice(&(mask.get(r, c) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Mask> {
    let bad = |reason: &str| Error::Format {
        path: "pfm".into(),
        reason: reason.into(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| bad("header is not ASCII"))?
                .to_string(),
        );
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("only single-channel Pf is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("scale"))?;
    let body = bytes
        .get(pos..pos + 4 * w * h)
        .ok_or_else(|| bad("truncated data"))?;
    let mut data = vec![0.0; w * h];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (r, c) = (h - 1 - i / w, i % w);
        data[r * w + c] = v as f64;
    }
    Mask::new(h, w, data)
}
