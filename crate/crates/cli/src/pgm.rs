//! 8-bit grayscale Netpbm (PGM) reading and writing.
//!
//! Both the plain (`P2`) and raw (`P5`) encodings are read. Samples are
//! rescaled to `[0, 255]` when `maxval < 255` and then clamped to
//! `[1, 255]` so every loaded image is strictly positive.

use std::path::Path;

use despeckle::{Error, ImageGrid, Result};
use log::warn;

/// Floor applied to loaded samples.
pub const LOAD_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// `P2`, ASCII samples.
    Plain,
    /// `P5`, one byte per sample.
    Raw,
}

/// A decoded image together with how many samples were raised to the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub image: ImageGrid,
    pub encoding: Encoding,
    pub clamped: usize,
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = decode(&bytes)?;
    if decoded.clamped > 0 {
        warn!(
            "{}: {} pixel(s) below {LOAD_FLOOR} raised to {LOAD_FLOOR}",
            path.display(),
            decoded.clamped
        );
    }
    Ok(decoded.image)
}

/// Writes `img` as raw PGM, clipping to `[0, 255]` and rounding half to even.
pub fn save_image(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(img, Encoding::Raw)).map_err(|e| Error::io(path, e))
}

pub fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round_ties_even() as u8
}

pub fn encode(img: &ImageGrid, encoding: Encoding) -> Vec<u8> {
    let (w, h) = img.dims();
    let magic = match encoding {
        Encoding::Plain => "P2",
        Encoding::Raw => "P5",
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    match encoding {
        Encoding::Raw => out.extend(img.data().iter().map(|&v| quantize(v))),
        Encoding::Plain => {
            for row in img.data().chunks(w) {
                let line: Vec<String> = row.iter().map(|&v| quantize(v).to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(r.error("missing Netpbm magic number"));
    }
    let encoding = match bytes[1] {
        b'2' => Encoding::Plain,
        b'5' => Encoding::Raw,
        b'1' | b'4' => return Err(r.error("bitmap (PBM) files are not grayscale images")),
        b'3' | b'6' => return Err(r.error("color (PPM) files are not supported; convert to grayscale")),
        b'7' => return Err(r.error("PAM files are not supported")),
        _ => return Err(r.error("unknown Netpbm magic number")),
    };
    r.pos = 2;
    let width = r.header_int("width")?;
    let height = r.header_int("height")?;
    r.skip_header_space();
    let maxval_at = r.pos;
    let maxval = r.header_int("maxval")?;
    if width == 0 || height == 0 {
        return Err(r.error_at(maxval_at, "image has zero width or height"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(r.error_at(maxval_at, format!("unsupported maxval {maxval} (only 8-bit images are read)")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| r.error_at(maxval_at, "image dimensions overflow"))?;
    let scale = 255.0 / maxval as f64;

    let mut samples = Vec::with_capacity(n);
    match encoding {
        Encoding::Raw => {
            // Exactly one whitespace byte separates maxval from the raster.
            if !r.peek().is_some_and(|b| b.is_ascii_whitespace()) {
                return Err(r.error("expected whitespace after maxval"));
            }
            r.pos += 1;
            let raster = &bytes[r.pos..];
            if raster.len() < n {
                return Err(Error::Format {
                    offset: bytes.len(),
                    message: format!("raster truncated: expected {n} bytes, found {}", raster.len()),
                });
            }
            for (k, &b) in raster[..n].iter().enumerate() {
                if b as usize > maxval {
                    return Err(r.error_at(r.pos + k, format!("sample {b} exceeds maxval {maxval}")));
                }
                samples.push(b as f64);
            }
        }
        Encoding::Plain => {
            for _ in 0..n {
                r.skip_space();
                let at = r.pos;
                let v = r.int("sample")?;
                if v > maxval {
                    return Err(r.error_at(at, format!("sample {v} exceeds maxval {maxval}")));
                }
                samples.push(v as f64);
            }
        }
    }

    let mut clamped = 0;
    for v in &mut samples {
        *v *= scale;
        if *v < LOAD_FLOOR {
            *v = LOAD_FLOOR;
            clamped += 1;
        }
    }
    Ok(Decoded {
        image: ImageGrid::new(width, height, samples)?,
        encoding,
        clamped,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn error(&self, message: impl Into<String>) -> Error {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comments, which may appear anywhere in the header.
    fn skip_header_space(&mut self) {
        while let Some(b) = self.peek() {
            if b == b'#' {
                while self.peek().is_some_and(|c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn header_int(&mut self, what: &str) -> Result<usize> {
        self.skip_header_space();
        self.int(what)
    }

    fn skip_space(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn int(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.peek() {
                None => self.error(format!("unexpected end of file reading {what}")),
                Some(_) => self.error(format!("expected a decimal integer for {what}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error_at(start, format!("{what} is out of range")))
    }
}
