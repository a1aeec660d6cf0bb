//! Image containers, BT.601 colour conversion and file I/O.
//!
//! All processing happens on [`Luma`] planes holding `f64` intensities in
//! `[0, 1]`. 8-bit quantization only happens at the [`RgbImage`] boundary.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A single-channel image plane, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Luma {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Luma {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width} plane",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Copy of the `height x width` window whose top-left corner is `(top, left)`.
    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "window {height}x{width} at ({top}, {left}) exceeds {}x{} plane",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            data.extend_from_slice(&self.data[r * self.width + left..r * self.width + left + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Central window of the given size; odd leftovers go to the bottom/right.
    pub fn center_window(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "cannot take {height}x{width} center of {}x{} plane",
                self.height, self.width
            )));
        }
        self.window(
            (self.height - height) / 2,
            (self.width - width) / 2,
            height,
            width,
        )
    }

    /// Pad every side by `pad` pixels using half-sample symmetric reflection.
    pub fn pad_reflect(&self, pad: usize) -> Self {
        let h = self.height + 2 * pad;
        let w = self.width + 2 * pad;
        Self::from_fn(h, w, |r, c| {
            let sr = reflect_index(r as isize - pad as isize, self.height);
            let sc = reflect_index(c as isize - pad as isize, self.width);
            self.get(sr, sc)
        })
    }

    /// Overwrite the region starting at `(top, left)` with `src`.
    pub fn paste(&mut self, src: &Luma, top: usize, left: usize) -> Result<()> {
        if top + src.height > self.height || left + src.width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} paste at ({top}, {left}) exceeds {}x{} plane",
                src.height, src.width, self.height, self.width
            )));
        }
        for r in 0..src.height {
            let dst = (top + r) * self.width + left;
            self.data[dst..dst + src.width].copy_from_slice(src.row(r));
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection of an arbitrary index into `0..n`.
///
/// The extension is `... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...`
/// with period `2n`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// 8-bit RGB image, row-major interleaved triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} bytes for a {height}x{width} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Split into three planes scaled to `[0, 1]`.
    pub fn to_planes(&self) -> [Luma; 3] {
        let plane = |ch: usize| {
            let data = self
                .data
                .chunks_exact(3)
                .map(|px| px[ch] as f64 / 255.0)
                .collect();
            Luma {
                height: self.height,
                width: self.width,
                data,
            }
        };
        [plane(0), plane(1), plane(2)]
    }

    /// Quantize three `[0, 1]` planes back to 8 bits.
    pub fn from_planes(planes: &[Luma; 3]) -> Result<Self> {
        let (h, w) = planes[0].dims();
        if planes.iter().any(|p| p.dims() != (h, w)) {
            return Err(Error::DimensionMismatch(
                "colour planes differ in size".into(),
            ));
        }
        let mut data = Vec::with_capacity(3 * h * w);
        for i in 0..h * w {
            for p in planes {
                data.push(quantize_u8(p.data[i] * 255.0));
            }
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    /// Centre crop so both sides are divisible by `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Self {
        let h = self.height - self.height % m;
        let w = self.width - self.width % m;
        let top = (self.height - h) / 2;
        let left = (self.width - w) / 2;
        let mut data = Vec::with_capacity(3 * h * w);
        for r in top..top + h {
            let start = 3 * (r * self.width + left);
            data.extend_from_slice(&self.data[start..start + 3 * w]);
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }
}

/// Clamp to `[0, 255]` and round half away from zero.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Chroma planes (Cb, Cr) stored as `value / 255`, so neutral chroma is `128/255`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chroma {
    pub cb: Luma,
    pub cr: Luma,
}

pub const NEUTRAL_CHROMA: f64 = 128.0 / 255.0;

impl Chroma {
    pub fn neutral(height: usize, width: usize) -> Self {
        Self {
            cb: Luma::filled(height, width, NEUTRAL_CHROMA),
            cr: Luma::filled(height, width, NEUTRAL_CHROMA),
        }
    }
}

/// Full-range BT.601 forward transform.
pub fn rgb_to_luma(img: &RgbImage) -> (Luma, Chroma) {
    let n = img.height * img.width;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for px in img.data.chunks_exact(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        y.push(((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0));
        cb.push((128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b) / 255.0);
        cr.push((128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b) / 255.0);
    }
    let plane = |data| Luma {
        height: img.height,
        width: img.width,
        data,
    };
    (
        plane(y),
        Chroma {
            cb: plane(cb),
            cr: plane(cr),
        },
    )
}

/// Inverse of [`rgb_to_luma`]; channels are clamped and rounded to 8 bits.
pub fn luma_to_rgb(y: &Luma, chroma: &Chroma) -> Result<RgbImage> {
    if chroma.cb.dims() != y.dims() || chroma.cr.dims() != y.dims() {
        return Err(Error::DimensionMismatch(format!(
            "luma {}x{}, cb {}x{}, cr {}x{}",
            y.height,
            y.width,
            chroma.cb.height,
            chroma.cb.width,
            chroma.cr.height,
            chroma.cr.width
        )));
    }
    let mut data = Vec::with_capacity(3 * y.data.len());
    for i in 0..y.data.len() {
        let yy = y.data[i] * 255.0;
        let cb = chroma.cb.data[i] * 255.0 - 128.0;
        let cr = chroma.cr.data[i] * 255.0 - 128.0;
        data.push(quantize_u8(yy + 1.402 * cr));
        data.push(quantize_u8(yy - 0.344136 * cb - 0.714136 * cr));
        data.push(quantize_u8(yy + 1.772 * cb));
    }
    Ok(RgbImage {
        height: y.height,
        width: y.width,
        data,
    })
}

/// Drop `border` pixels from every side.
pub fn crop_border(img: &Luma, border: usize) -> Result<Luma> {
    if 2 * border >= img.height.min(img.width) {
        return Err(Error::BorderTooLarge {
            border,
            height: img.height,
            width: img.width,
        });
    }
    img.window(
        border,
        border,
        img.height - 2 * border,
        img.width - 2 * border,
    )
}

/// Load a PNG or binary PGM/PPM, detected by content rather than extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PNG or binary PGM/PPM file".into(),
        })
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<RgbImage> {
    use image::{ColorType, ImageFormat};

    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        Error::CorruptData {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("unsupported PNG colour type {other:?}"),
            })
        }
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::new(h as usize, w as usize, rgb.into_raw())
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<RgbImage> {
    let corrupt = |reason: &str| Error::CorruptData {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut tokens = [0usize; 3];
    for tok in &mut tokens {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n') | Some(b'\r')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("malformed header"));
        }
        *tok = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("header value out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt("missing whitespace after header"));
    }
    pos += 1;
    let [width, height, maxval] = tokens;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} (only 8-bit samples are supported)"),
        });
    }
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(corrupt(&format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let raster = &raster[..expected];
    let scale = |v: u8| -> u8 {
        if maxval == 255 {
            v
        } else {
            quantize_u8(v.min(maxval as u8) as f64 * 255.0 / maxval as f64)
        }
    };
    let data = if channels == 1 {
        raster.iter().flat_map(|&v| [scale(v); 3]).collect()
    } else {
        raster.iter().map(|&v| scale(v)).collect()
    };
    RgbImage::new(height, width, data)
}

/// Save by extension: `.png` (RGB), `.ppm` (P6) or `.pgm` (P5, BT.601 luma).
pub fn save_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img, path)?,
        "ppm" => {
            let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.extend_from_slice(&img.data);
            out
        }
        "pgm" => {
            let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
            let (y, _) = rgb_to_luma(img);
            out.extend(y.data.iter().map(|&v| quantize_u8(v * 255.0)));
            out
        }
        _ => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("cannot write extension {ext:?}"),
            })
        }
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn encode_png(img: &RgbImage, path: &Path) -> Result<Vec<u8>> {
    use image::codecs::png::PngEncoder;
    use image::{ExtendedColorType, ImageEncoder};

    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(
            &img.data,
            img.width as u32,
            img.height as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    Ok(out)
}
