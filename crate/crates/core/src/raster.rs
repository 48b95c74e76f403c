//! 8-bit rasters, binary PGM/PPM I/O and the pixel-level operations the
//! rest of the pipeline is built on.
//!
//! All intensity quantization rounds half up: `floor(v + 0.5)`, then clamps
//! to `[0, 255]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round half up and clamp to the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    let r = (v + 0.5).floor();
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Raster({}x{}x{}, {} samples)",
            self.width,
            self.height,
            self.channels,
            self.samples.len()
        )
    }
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "empty raster {width}x{height}"
            )));
        }
        if samples.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.samples[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let i = self.index(x, y, c);
        self.samples[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = self.index(x, y, 0);
        &self.samples[i..i + self.channels]
    }

    /// Copy of the `w`x`h` block at (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(w * h * self.channels);
        for row in y..y + h {
            let start = self.index(x, row, 0);
            out.extend_from_slice(&self.samples[start..start + w * self.channels]);
        }
        Raster::new(w, h, self.channels, out)
    }

    /// Gray raster replicated into three identical channels.
    pub fn replicate3(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let samples = self.samples.iter().flat_map(|&v| [v, v, v]).collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            samples,
        }
    }

    /// Samples as a single-channel plane of f64 (grayscale-converting if needed).
    pub fn gray_plane(&self) -> Vec<f64> {
        to_grayscale(self).samples.iter().map(|&v| v as f64).collect()
    }
}

// ---------------------------------------------------------------------------
// PGM / PPM

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::ImageFormat {
        offset,
        reason: reason.into(),
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
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

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse()
            .map(|v| (v, start))
            .map_err(|_| format_err(start, format!("{what} out of range")))
    }
}

/// Decode a binary PGM (P5) or PPM (P6) image with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 2 {
        return Err(format_err(0, "missing magic number"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(format_err(0, "expected magic P5 or P6")),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let (width, _) = cur.number("width")?;
    let (height, _) = cur.number("height")?;
    let (maxval, maxval_at) = cur.number("maxval")?;
    if maxval != 255 {
        return Err(format_err(
            maxval_at,
            format!("maxval must be 255, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(format_err(2, format!("zero dimension {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(format_err(cur.pos, "expected whitespace after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| format_err(2, "dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: need {need} bytes from offset {}, have {}",
                cur.pos,
                payload.len()
            ),
        ));
    }
    Raster::new(width, height, channels, payload[..need].to_vec())
}

pub fn encode_pnm(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend_from_slice(&raster.samples);
    out
}

pub fn image_read(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn image_write(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(raster)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Pixel operations

/// BT.601 luma in exact integer arithmetic. Gray input passes through.
pub fn to_grayscale(raster: &Raster) -> Raster {
    if raster.channels == 1 {
        return raster.clone();
    }
    let samples = raster
        .samples
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    Raster {
        width: raster.width,
        height: raster.height,
        channels: 1,
        samples,
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((y + 500) / 1000).min(255) as u8
}

/// Non-overlapping lattice of square windows anchored at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub window: usize,
    pub rows: usize,
    pub cols: usize,
    pub origin_x: usize,
    pub origin_y: usize,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel origin of tile (`row`, `col`).
    pub fn tile_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (
            self.origin_x + col * self.window,
            self.origin_y + row * self.window,
        )
    }

    pub fn extract(&self, raster: &Raster, row: usize, col: usize) -> Result<Raster> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::invalid(format!(
                "tile ({row},{col}) outside {}x{} grid",
                self.rows, self.cols
            )));
        }
        let (x, y) = self.tile_origin(row, col);
        raster.crop(x, y, self.window, self.window)
    }

    /// Width and height of the covered region in pixels.
    pub fn covered(&self) -> (usize, usize) {
        (self.cols * self.window, self.rows * self.window)
    }
}

pub fn tile(raster: &Raster, window: usize) -> Result<TileGrid> {
    if window == 0 {
        return Err(Error::invalid("window must be positive"));
    }
    if raster.width < window || raster.height < window {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than window {window}",
            raster.width, raster.height
        )));
    }
    Ok(TileGrid {
        window,
        rows: raster.height / window,
        cols: raster.width / window,
        origin_x: 0,
        origin_y: 0,
    })
}

fn corner_aligned(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len == 1 || src_len == 1 {
        0.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

/// Bilinear resampling with corner-aligned coordinates.
pub fn bilinear_resize(raster: &Raster, new_w: usize, new_h: usize) -> Result<Raster> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    if new_w == raster.width && new_h == raster.height {
        return Ok(raster.clone());
    }
    let ch = raster.channels;
    let mut out = Vec::with_capacity(new_w * new_h * ch);
    for dy in 0..new_h {
        let sy = corner_aligned(dy, raster.height, new_h);
        let y0 = (sy.floor() as usize).min(raster.height - 1);
        let y1 = (y0 + 1).min(raster.height - 1);
        let fy = sy - y0 as f64;
        for dx in 0..new_w {
            let sx = corner_aligned(dx, raster.width, new_w);
            let x0 = (sx.floor() as usize).min(raster.width - 1);
            let x1 = (x0 + 1).min(raster.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..ch {
                let p00 = raster.get(x0, y0, c) as f64;
                let p10 = raster.get(x1, y0, c) as f64;
                let p01 = raster.get(x0, y1, c) as f64;
                let p11 = raster.get(x1, y1, c) as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                out.push(quantize(top + (bottom - top) * fy));
            }
        }
    }
    Raster::new(new_w, new_h, ch, out)
}

/// Percentile with linear interpolation between order statistics.
pub(crate) fn percentile_sorted(sorted: &[u8], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

/// Linear stretch mapping the `p_low` percentile to 0 and `p_high` to 255.
pub fn contrast_stretch(raster: &Raster, p_low: f64, p_high: f64) -> Result<Raster> {
    if raster.channels != 1 {
        return Err(Error::invalid("contrast_stretch needs a 1-channel raster"));
    }
    if !(0.0 <= p_low && p_low < p_high && p_high <= 100.0) {
        return Err(Error::invalid(format!(
            "percentiles must satisfy 0 <= low < high <= 100, got {p_low}, {p_high}"
        )));
    }
    let mut sorted = raster.samples.clone();
    sorted.sort_unstable();
    let lo = percentile_sorted(&sorted, p_low);
    let hi = percentile_sorted(&sorted, p_high);
    if hi <= lo {
        return Ok(raster.clone());
    }
    let scale = 255.0 / (hi - lo);
    let lut: Vec<u8> = (0..256)
        .map(|v| quantize((v as f64 - lo) * scale))
        .collect();
    let samples = raster.samples.iter().map(|&v| lut[v as usize]).collect();
    Raster::new(raster.width, raster.height, 1, samples)
}
