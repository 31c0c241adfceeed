//! Binary PGM (P5), grayscale PNG and PFM codecs.
//!
//! An integer sample `v` with maximum `M` maps to `v / M`. On write, values are
//! clamped to `[0, 1]` and rounded to the nearest level. PFM stores 32-bit
//! floats unclamped, so it is the format for noisy images that leave `[0, 1]`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use super::Image;
use crate::error::{Error, Result};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Sample width for integer exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

fn quantize(v: f64, max: u32) -> u32 {
    (v.clamp(0.0, 1.0) * max as f64).round() as u32
}

/// Reads a PGM, PNG or grayscale PFM file, sniffing the format from its leading bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(PNG_MAGIC) {
        read_png(&bytes)
    } else if bytes.starts_with(b"P5") {
        read_pgm(&bytes)
    } else if bytes.starts_with(b"Pf") {
        read_pfm(&bytes)
    } else {
        Err(Error::format(
            "image",
            "expected a binary PGM (P5), PNG or grayscale PFM file",
        ))
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// True when writing to `path` keeps values outside `[0, 1]`.
pub fn is_lossless_path(path: impl AsRef<Path>) -> bool {
    has_extension(path.as_ref(), "pfm")
}

/// Writes `.png` as PNG, `.pfm` as float PFM (ignoring `depth`) and everything
/// else as binary PGM.
pub fn write_image(path: impl AsRef<Path>, img: &Image, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = if has_extension(path, "png") {
        write_png(img, depth)?
    } else if has_extension(path, "pfm") {
        write_pfm(img)
    } else {
        write_pgm(img, depth)
    };
    fs::write(path, bytes)?;
    Ok(())
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format("pgm", "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("pgm", "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("pgm", "header field out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("pgm", "missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::format("pgm", "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            "pgm",
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::format("pgm", "missing P5 magic"));
    }
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let wide = h.maxval > 255;
    let need = if wide { 2 * n } else { n };
    let raster = bytes
        .get(h.data_start..h.data_start + need)
        .ok_or_else(|| Error::format("pgm", format!("raster needs {need} bytes")))?;
    let max = h.maxval as f64;
    let data = if wide {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / max)
            .collect()
    } else {
        raster.iter().map(|&v| v as f64 / max).collect()
    };
    Image::new(h.height, h.width, data)
}

pub fn write_pgm(img: &Image, depth: BitDepth) -> Vec<u8> {
    let max = depth.max_value();
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), max).into_bytes();
    match depth {
        BitDepth::Eight => out.extend(img.data().iter().map(|&v| quantize(v, max) as u8)),
        BitDepth::Sixteen => {
            for &v in img.data() {
                out.extend_from_slice(&(quantize(v, max) as u16).to_be_bytes());
            }
        }
    }
    out
}

fn pfm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while bytes.get(*pos).is_some_and(u8::is_ascii_whitespace) {
        *pos += 1;
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("pfm", "truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::format("pfm", "header is not ascii"))
}

/// Decodes a grayscale PFM (`Pf`). Rows are stored bottom to top; a negative
/// scale means little-endian samples.
pub fn read_pfm(bytes: &[u8]) -> Result<Image> {
    if !bytes.starts_with(b"Pf") {
        return Err(Error::format(
            "pfm",
            "missing Pf magic (only grayscale PFM is supported)",
        ));
    }
    let mut pos = 2;
    let mut number = |what: &str| -> Result<f64> {
        pfm_token(bytes, &mut pos)?
            .parse::<f64>()
            .map_err(|_| Error::format("pfm", format!("bad {what}")))
    };
    let (width, height, scale) = (number("width")?, number("height")?, number("scale")?);
    if !(width >= 1.0 && height >= 1.0 && width.fract() == 0.0 && height.fract() == 0.0)
        || scale == 0.0
    {
        return Err(Error::format("pfm", "invalid dimensions or scale"));
    }
    let (w, h) = (width as usize, height as usize);
    let raster = bytes
        .get(pos + 1..pos + 1 + 4 * w * h)
        .ok_or_else(|| Error::format("pfm", format!("raster needs {} bytes", 4 * w * h)))?;
    let mut data = vec![0.0; w * h];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (r, c) = (h - 1 - i / w, i % w);
        data[r * w + c] = v as f64;
    }
    Image::new(h, w, data)
}

/// Encodes as little-endian grayscale PFM. Samples are rounded to `f32`.
pub fn write_pfm(img: &Image) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for r in (0..h).rev() {
        for c in 0..w {
            out.extend_from_slice(&(img.get(r, c) as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a PNG. Color images are reduced to the mean of their color channels.
pub fn read_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format("png", e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match &decoded {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => {
            let rgb = other.to_rgb32f();
            rgb.pixels()
                .map(|p| p.0.iter().map(|&c| c as f64).sum::<f64>() / 3.0)
                .collect()
        }
    };
    Image::new(h, w, data)
}

pub fn write_png(img: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = depth.max_value();
    let dynamic = match depth {
        BitDepth::Eight => {
            let raw = img.data().iter().map(|&v| quantize(v, max) as u8).collect();
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap())
        }
        BitDepth::Sixteen => {
            let raw = img
                .data()
                .iter()
                .map(|&v| quantize(v, max) as u16)
                .collect();
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap())
        }
    };
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format("png", e.to_string()))?;
    Ok(out.into_inner())
}
