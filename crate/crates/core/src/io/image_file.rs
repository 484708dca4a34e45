//! Grayscale image files: binary and ASCII PGM, and 8-bit PNG.

use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::{extension, read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::raster::Image;

/// Rec. 601 luma.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Rounds to the nearest 8-bit level, saturating at 0 and 255.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

struct Cursor8<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor8<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    /// Next decimal token and the offset where it starts.
    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            let message = if start == self.bytes.len() {
                format!("unexpected end of data, expected {what}")
            } else {
                format!("expected {what}, found byte 0x{:02x}", self.bytes[start])
            };
            return Err(Error::Parse { offset: start, message });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map(|v| (v, start))
            .map_err(|_| Error::Parse {
                offset: start,
                message: format!("{what} is out of range"),
            })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: "missing P5 or P2 magic".into(),
            })
        }
    };
    let mut c = Cursor8 { bytes, pos: 2 };
    if !c.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::Parse {
            offset: 2,
            message: "magic must be followed by whitespace".into(),
        });
    }
    let (width, width_at) = c.number("width")?;
    let (height, height_at) = c.number("height")?;
    let (maxval, maxval_at) = c.number("maxval")?;
    if width == 0 {
        return Err(Error::Parse { offset: width_at, message: "width is zero".into() });
    }
    if height == 0 {
        return Err(Error::Parse { offset: height_at, message: "height is zero".into() });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse {
            offset: maxval_at,
            message: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("16-bit PGM (maxval {maxval})")));
    }
    if !c.bytes.get(c.pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Parse {
            offset: c.pos,
            message: "maxval must be followed by a single whitespace byte".into(),
        });
    }
    Ok(Header {
        binary,
        width,
        height,
        maxval,
        data_start: c.pos + 1,
    })
}

/// Parses a P5 or P2 graymap. Samples are rescaled to `[0, 255]` when
/// `maxval` is below 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let n = h.width.checked_mul(h.height).ok_or_else(|| Error::Parse {
        offset: 3,
        message: "image dimensions overflow".into(),
    })?;
    let scale = 255.0 / h.maxval as f64;
    let mut data = Vec::with_capacity(n);
    if h.binary {
        let raster = &bytes[h.data_start.min(bytes.len())..];
        if raster.len() < n {
            return Err(Error::Length {
                expected: h.data_start + n,
                found: bytes.len(),
            });
        }
        data.extend(raster[..n].iter().map(|&b| b as f64 * scale));
    } else {
        let mut c = Cursor8 { bytes, pos: h.data_start };
        for _ in 0..n {
            let (v, at) = c.number("sample")?;
            if v > h.maxval {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("sample {v} exceeds maxval {}", h.maxval),
                });
            }
            data.push(v as f64 * scale);
        }
    }
    Image::new(h.width, h.height, data)
}

/// Binary 8-bit PGM.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match (decoded.color(), decoded) {
        (ColorType::L8, DynamicImage::ImageLuma8(buf)) => buf.into_raw().into_iter().map(f64::from).collect(),
        (ColorType::La8, img) => img.to_luma8().into_raw().into_iter().map(f64::from).collect(),
        (ColorType::Rgb8 | ColorType::Rgba8, img) => img
            .to_rgb8()
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect(),
        (other, _) => return Err(Error::UnsupportedFormat(format!("PNG colour type {other:?}"))),
    };
    Image::new(w, h, data)
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Reads a PGM (P5/P2) or PNG file, detected from its leading bytes.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P") {
        decode_pgm(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: neither PGM nor PNG",
            path.display()
        )))
    }
}

fn encode_png(width: usize, height: usize, pixels: &[u8], color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(pixels, width as u32, height as u32, color)
        .map_err(|e| Error::Format(format!("PNG encoding: {e}")))?;
    Ok(out.into_inner())
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_atomic(path, &encode_png(width, height, pixels, ExtendedColorType::L8)?)
}

pub fn write_rgb_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_atomic(path, &encode_png(width, height, pixels, ExtendedColorType::Rgb8)?)
}

/// Writes an 8-bit grayscale file; the format follows the extension (`.pgm` or `.png`).
pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    match extension(path).as_str() {
        "pgm" => write_atomic(path, &encode_pgm(img)),
        "png" => {
            let pixels: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
            write_gray_png(path, img.width(), img.height(), &pixels)
        }
        other => Err(Error::UnsupportedFormat(format!("image extension '{other}'"))),
    }
}
