//! 8-bit image buffers, color-space conversion, and PNG round trips.
//!
//! All pixel math in the pipeline happens on plain `u8` rasters: 3-channel
//! RGB / HSV / YCbCr or 1-channel grayscale. Conversions use BT.601
//! full-range luma and chroma; hue is scaled so that 0-360 degrees maps onto
//! 0-255 (`h8 = round(deg * 255 / 360)`), saturation and value are 0-255.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::BoundingBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Ycbcr,
    Grayscale,
}

impl ColorSpace {
    pub fn channels(&self) -> u8 {
        match self {
            ColorSpace::Grayscale => 1,
            _ => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ColorSpace::Rgb => "rgb",
            ColorSpace::Hsv => "hsv",
            ColorSpace::Ycbcr => "ycbcr",
            ColorSpace::Grayscale => "grayscale",
        }
    }
}

impl std::fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major interleaved pixel buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    color_space: ColorSpace,
    data: Vec<u8>,
}

impl ImageBuffer {
    /// Zero-filled buffer.
    pub fn new(width: u32, height: u32, color_space: ColorSpace) -> ImageBuffer {
        let len = width as usize * height as usize * color_space.channels() as usize;
        ImageBuffer {
            width,
            height,
            color_space,
            data: vec![0; len],
        }
    }

    pub fn from_raw(
        width: u32,
        height: u32,
        color_space: ColorSpace,
        data: Vec<u8>,
    ) -> Result<ImageBuffer> {
        let expected = width as usize * height as usize * color_space.channels() as usize;
        if data.len() != expected {
            return Err(Error::BufferSize {
                width,
                height,
                channels: color_space.channels(),
                got: data.len(),
            });
        }
        Ok(ImageBuffer {
            width,
            height,
            color_space,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn channels(&self) -> u8 {
        self.color_space.channels()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * self.channels() as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels() as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        let n = self.channels() as usize;
        debug_assert_eq!(px.len(), n);
        let o = self.offset(x, y);
        self.data[o..o + n].copy_from_slice(px);
    }

    /// Single-channel accessor; panics unless grayscale.
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        assert_eq!(self.color_space, ColorSpace::Grayscale);
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set_gray(&mut self, x: u32, y: u32, v: u8) {
        assert_eq!(self.color_space, ColorSpace::Grayscale);
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn fill(&mut self, px: &[u8]) {
        let n = self.channels() as usize;
        assert_eq!(px.len(), n);
        for chunk in self.data.chunks_exact_mut(n) {
            chunk.copy_from_slice(px);
        }
    }

    /// Converts between color spaces. Grayscale is a sink: converting *from*
    /// grayscale to a 3-channel space is an error (use [`gray_to_rgb`] to
    /// up-channel explicitly).
    ///
    /// [`gray_to_rgb`]: ImageBuffer::gray_to_rgb
    pub fn convert(&self, target: ColorSpace) -> Result<ImageBuffer> {
        use ColorSpace::*;
        if self.color_space == target {
            return Ok(self.clone());
        }
        match (self.color_space, target) {
            (Rgb, Hsv) => Ok(self.map3(Hsv, rgb_to_hsv)),
            (Rgb, Ycbcr) => Ok(self.map3(Ycbcr, rgb_to_ycbcr)),
            (Hsv, Rgb) => Ok(self.map3(Rgb, hsv_to_rgb)),
            (Ycbcr, Rgb) => Ok(self.map3(Rgb, ycbcr_to_rgb)),
            // Routed through RGB.
            (Hsv, Ycbcr) => self.convert(Rgb)?.convert(Ycbcr),
            (Ycbcr, Hsv) => self.convert(Rgb)?.convert(Hsv),
            (Rgb, Grayscale) => Ok(self.to_gray_with(|(r, g, b)| luma(r, g, b))),
            (Hsv, Grayscale) => Ok(self.to_gray_with(|(h, s, v)| {
                let (r, g, b) = hsv_to_rgb((h, s, v));
                luma(r, g, b)
            })),
            // Y *is* the BT.601 luma.
            (Ycbcr, Grayscale) => Ok(self.to_gray_with(|(y, _, _)| y)),
            (Grayscale, _) => Err(Error::UnsupportedConversion {
                from: self.color_space.name(),
                to: target.name(),
            }),
            (a, b) => {
                debug_assert!(a == b, "unhandled conversion {a} -> {b}");
                Ok(self.clone())
            }
        }
    }

    fn map3(&self, target: ColorSpace, f: fn((u8, u8, u8)) -> (u8, u8, u8)) -> ImageBuffer {
        debug_assert_eq!(self.channels(), 3);
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3) {
            let (a, b, c) = f((px[0], px[1], px[2]));
            data.extend_from_slice(&[a, b, c]);
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            color_space: target,
            data,
        }
    }

    pub fn to_gray_with(&self, f: impl Fn((u8, u8, u8)) -> u8) -> ImageBuffer {
        debug_assert_eq!(self.channels(), 3);
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| f((px[0], px[1], px[2])))
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            color_space: ColorSpace::Grayscale,
            data,
        }
    }

    /// Replicates a grayscale channel into RGB.
    pub fn gray_to_rgb(&self) -> Result<ImageBuffer> {
        if self.color_space != ColorSpace::Grayscale {
            return Err(Error::UnsupportedConversion {
                from: self.color_space.name(),
                to: "rgb (via gray_to_rgb)",
            });
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        Ok(ImageBuffer {
            width: self.width,
            height: self.height,
            color_space: ColorSpace::Rgb,
            data,
        })
    }

    /// Copies the pixels under `bbox` (clipped to the frame) into a new
    /// buffer. Fails if nothing of the box lies inside the frame.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<ImageBuffer> {
        let b = bbox.clip(self.width, self.height).ok_or(Error::EmptyCrop)?;
        let n = self.channels() as usize;
        let row_len = b.width() as usize * n;
        let mut data = Vec::with_capacity(row_len * b.height() as usize);
        for y in b.y_min()..b.y_max() {
            let start = self.offset(b.x_min(), y);
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        Ok(ImageBuffer {
            width: b.width(),
            height: b.height(),
            color_space: self.color_space,
            data,
        })
    }

    /// Decodes a PNG. 3- and 4-channel files land as RGB (alpha dropped),
    /// single-channel files as grayscale.
    pub fn load_png(path: &Path) -> Result<ImageBuffer> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::ImageCodec {
                path: path.to_path_buf(),
                source: e,
            })?;
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                ImageBuffer::from_raw(w, h, ColorSpace::Grayscale, g.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                ImageBuffer::from_raw(w, h, ColorSpace::Rgb, rgb.into_raw())
            }
        }
    }

    /// Encodes as PNG: grayscale buffers as 8-bit gray, 3-channel buffers as
    /// RGB (the bytes are written as-is, so convert to RGB first if the
    /// buffer holds HSV or YCbCr).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let err = |e: image::ImageError| Error::ImageCodec {
            path: path.to_path_buf(),
            source: e,
        };
        match self.channels() {
            1 => image::GrayImage::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer length checked at construction")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err),
            _ => image::RgbImage::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer length checked at construction")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err),
        }
    }
}

/// BT.601 full-range luma, rounded.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

pub fn rgb_to_hsv((r, g, b): (u8, u8, u8)) -> (u8, u8, u8) {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { 255.0 * delta / max } else { 0.0 };
    let h_deg = if delta == 0.0 {
        0.0
    } else if max == rf {
        60.0 * (((gf - bf) / delta).rem_euclid(6.0))
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    let h = (h_deg * 255.0 / 360.0).round();
    (h as u8, s.round() as u8, v.round() as u8)
}

pub fn hsv_to_rgb((h, s, v): (u8, u8, u8)) -> (u8, u8, u8) {
    let h_deg = h as f64 * 360.0 / 255.0;
    let s = s as f64 / 255.0;
    let v = v as f64;
    let c = v * s;
    let hp = (h_deg / 60.0) % 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        (r1 + m).round().clamp(0.0, 255.0) as u8,
        (g1 + m).round().clamp(0.0, 255.0) as u8,
        (b1 + m).round().clamp(0.0, 255.0) as u8,
    )
}

pub fn rgb_to_ycbcr((r, g, b): (u8, u8, u8)) -> (u8, u8, u8) {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let y = 0.299 * rf + 0.587 * gf + 0.114 * bf;
    let cb = 128.0 - 0.168_736 * rf - 0.331_264 * gf + 0.5 * bf;
    let cr = 128.0 + 0.5 * rf - 0.418_688 * gf - 0.081_312 * bf;
    (
        y.round().clamp(0.0, 255.0) as u8,
        cb.round().clamp(0.0, 255.0) as u8,
        cr.round().clamp(0.0, 255.0) as u8,
    )
}

pub fn ycbcr_to_rgb((y, cb, cr): (u8, u8, u8)) -> (u8, u8, u8) {
    let (yf, cbf, crf) = (y as f64, cb as f64 - 128.0, cr as f64 - 128.0);
    let r = yf + 1.402 * crf;
    let g = yf - 0.344_136 * cbf - 0.714_136 * crf;
    let b = yf + 1.772 * cbf;
    (
        r.round().clamp(0.0, 255.0) as u8,
        g.round().clamp(0.0, 255.0) as u8,
        b.round().clamp(0.0, 255.0) as u8,
    )
}
