//! Binary PGM (P5) reading and writing.
//!
//! Intensities are stored as 16-bit big-endian samples with maxval 65535
//! (`round(v · 65535)`); masks as 8-bit samples with maxval 255 (0 / 255).

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

const MAX16: f64 = 65535.0;

fn header(width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("P5\n{width} {height}\n{maxval}\n").into_bytes()
}

pub fn encode_image16(img: &Image) -> Vec<u8> {
    let mut out = header(img.width(), img.height(), 65535);
    out.reserve(2 * img.data().len());
    for &v in img.data() {
        let q = (v.clamp(0.0, 1.0) * MAX16).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn encode_mask8(mask: &Mask) -> Vec<u8> {
    let mut out = header(mask.width(), mask.height(), 255);
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Maps an arbitrary grid to 16 bits after linear normalisation to `[lo, hi]`.
pub fn encode_normalized16(data: &Image, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled = Image::from_fn(data.height(), data.width(), |y, x| (data.get(y, x) - lo) / span);
    encode_image16(&scaled)
}

struct Raster<'a> {
    width: usize,
    height: usize,
    maxval: u32,
    pixels: &'a [u8],
    offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                self.err(format!("unexpected end of file while reading {what}"))
            } else {
                self.err(format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("{what} out of range")))
    }
}

fn parse<'a>(bytes: &'a [u8], path: &'a Path) -> Result<Raster<'a>> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(cur.err("missing P5 magic number"));
    }
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(cur.err("expected single whitespace after maxval")),
        None => return Err(cur.err("unexpected end of file after maxval")),
    }
    let sample = if maxval > 255 { 2 } else { 1 };
    let need = width * height * sample;
    let have = bytes.len() - cur.pos;
    if have < need {
        cur.pos = bytes.len();
        return Err(cur.err(format!("truncated raster: expected {need} bytes, found {have}")));
    }
    Ok(Raster {
        width,
        height,
        maxval,
        pixels: &bytes[cur.pos..cur.pos + need],
        offset: cur.pos,
    })
}

/// Decodes a P5 file of any bit depth into `[0, 1]` intensities.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<Image> {
    let r = parse(bytes, path)?;
    let max = f64::from(r.maxval);
    let data = if r.maxval > 255 {
        r.pixels
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / max)
            .collect()
    } else {
        r.pixels.iter().map(|&b| f64::from(b) / max).collect()
    };
    Image::new(r.height, r.width, data)
}

/// Decodes an 8-bit mask; every sample must be 0 or maxval.
pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<Mask> {
    let r = parse(bytes, path)?;
    if r.maxval > 255 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: r.offset,
            message: "mask must be 8-bit".into(),
        });
    }
    let mut data = Vec::with_capacity(r.pixels.len());
    for (i, &b) in r.pixels.iter().enumerate() {
        if b != 0 && u32::from(b) != r.maxval {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: r.offset + i,
                message: format!("mask sample {b} is neither 0 nor {}", r.maxval),
            });
        }
        data.push(b != 0);
    }
    Mask::new(r.height, r.width, data)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes, path)
}
