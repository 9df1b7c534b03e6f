use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::IngestError;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    #[serde(with = "b64_pixels")]
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, IngestError> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(IngestError::MalformedRaster(format!(
                "{} pixels for {height}x{width}",
                pixels.len()
            )));
        }
        Ok(Raster { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Raster {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    /// Number of pixels strictly darker than `threshold`.
    pub fn count_below(&self, threshold: u8) -> usize {
        self.pixels.iter().filter(|&&p| p < threshold).count()
    }
}

mod b64_pixels {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(pixels: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(pixels))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, IngestError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IngestError::MalformedRaster(format!("missing {what}")))
    }
}

/// Decodes a binary PGM (P5) with maxval 255. When `expected` is given the
/// decoded size must match it.
pub fn load_raster(bytes: &[u8], expected: Option<(usize, usize)>) -> Result<Raster, IngestError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(IngestError::UnsupportedFormat("not a netpbm file".into()));
    }
    if bytes[1] != b'5' {
        return Err(IngestError::UnsupportedFormat(format!(
            "P{} (only binary P5 graymaps are supported)",
            bytes[1] as char
        )));
    }
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(IngestError::UnsupportedFormat(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(IngestError::MalformedRaster("missing header terminator".into())),
    }
    let data = &bytes[header.pos..];
    if data.len() < width * height {
        return Err(IngestError::MalformedRaster(format!(
            "truncated: {} of {} pixel bytes",
            data.len(),
            width * height
        )));
    }
    let raster = Raster::new(height, width, data[..width * height].to_vec())?;
    if let Some((h, w)) = expected {
        if (h, w) != (height, width) {
            return Err(IngestError::DimensionMismatch {
                expected_h: h,
                expected_w: w,
                found_h: height,
                found_w: width,
            });
        }
    }
    Ok(raster)
}

pub fn write_pgm(r: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.pixels);
    out
}

/// Reflects index `i` (offset by `pad`) into `0..len`, duplicating the edge.
#[inline]
fn reflect(i: isize, len: isize) -> usize {
    let j = if i < 0 {
        -i - 1
    } else if i >= len {
        2 * len - i - 1
    } else {
        i
    };
    j as usize
}

/// Grows a raster by `pad` pixels on every side using inclusive mirror
/// reflection (the border row/column is repeated).
pub fn pad_mirror(r: &Raster, pad: usize) -> Result<Raster, IngestError> {
    if pad == 0 {
        return Ok(r.clone());
    }
    if pad >= r.height.min(r.width) {
        return Err(IngestError::PadTooLarge {
            pad,
            height: r.height,
            width: r.width,
        });
    }
    let (h, w) = (r.height + 2 * pad, r.width + 2 * pad);
    let mut pixels = Vec::with_capacity(h * w);
    for row in 0..h {
        let src_row = reflect(row as isize - pad as isize, r.height as isize);
        for col in 0..w {
            let src_col = reflect(col as isize - pad as isize, r.width as isize);
            pixels.push(r.get(src_row, src_col));
        }
    }
    Ok(Raster {
        height: h,
        width: w,
        pixels,
    })
}
