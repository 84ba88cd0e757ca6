use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

use super::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Sniffs the format from the leading magic bytes.
    pub fn detect(bytes: &[u8]) -> Option<ImageFormat> {
        if bytes.starts_with(b"P5") {
            Some(ImageFormat::Pgm)
        } else if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]) {
            Some(ImageFormat::Png)
        } else {
            None
        }
    }
}

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

fn luma(r: u8, g: u8, b: u8) -> f64 {
    LUMA_R * f64::from(r) + LUMA_G * f64::from(g) + LUMA_B * f64::from(b)
}

/// Decodes binary PGM (P5) or 8-bit PNG content into a grayscale image.
/// RGB input is reduced with Rec. 601 luma weights; alpha is ignored.
pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<GrayImage> {
    match format {
        ImageFormat::Pgm => decode_pgm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

/// Reads and decodes a file, picking the format from its magic bytes.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = ImageFormat::detect(&bytes)
        .ok_or_else(|| Error::UnsupportedFormat(format!("{} is neither binary PGM nor PNG", path.display())))?;
    decode_image(&bytes, format)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedFile(format!("PGM header: expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedFile(format!("PGM header: {what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        if bytes.starts_with(b"P") {
            return Err(Error::UnsupportedFormat("only binary PGM (P5) is supported".into()));
        }
        return Err(Error::MalformedFile("missing P5 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedFile(format!("PGM dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedFile(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedFile("PGM header not terminated".into())),
    }
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let n = width.checked_mul(height).ok_or_else(|| Error::MalformedFile("PGM dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < n * bytes_per_sample {
        return Err(Error::MalformedFile(format!(
            "PGM raster truncated: {} of {} bytes",
            raster.len(),
            n * bytes_per_sample
        )));
    }
    let scale = 255.0 / maxval as f64;
    let pixels = if bytes_per_sample == 1 {
        raster[..n].iter().map(|&b| if maxval == 255 { f64::from(b) } else { f64::from(b) * scale }).collect()
    } else {
        raster[..2 * n].chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) * scale).collect()
    };
    GrayImage::new(width, height, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::MalformedFile(format!("PNG: {e}")))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::MalformedFile("PNG: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::MalformedFile(format!("PNG: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat("PNG: unexpanded palette".into())),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("PNG: bit depth {:?}", info.bit_depth)));
    }
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            pixels.push(match channels {
                1 | 2 => f64::from(px[0]),
                _ => luma(px[0], px[1], px[2]),
            });
        }
    }
    GrayImage::new(w, h, pixels)
}
