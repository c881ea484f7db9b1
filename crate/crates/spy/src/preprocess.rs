//! Frame preprocessing: gamma correction, region-of-interest cropping, and
//! color-space selection.
//!
//! The ROI stage binarizes a high-pass response — `|gray - blur(gray)| >=
//! threshold` — so that smooth background (deep space, slow gradients) drops
//! out while component edges survive, then takes the union of the bounding
//! boxes of all sufficiently large outer contours, padded by a fraction of
//! the box size. When nothing qualifies, the whole frame is the ROI.

use serde::{Deserialize, Serialize};

use crate::contour::{bounding_box, contour_area, find_contours};
use crate::domain::{BoundingBox, Mask};
use crate::error::{Error, Result};
use crate::raster::{ColorSpace, ImageBuffer};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub enabled: bool,
    pub value: f64,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            enabled: false,
            value: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub enabled: bool,
    /// Gaussian sigma of the low-pass used to form the high-pass response.
    pub sigma: f64,
    /// Minimum absolute high-pass response for a pixel to count as edge.
    pub threshold: u8,
    /// Minimum contour area (shoelace) for a region to join the ROI union.
    pub min_area: f64,
    /// Padding around the union box, as a fraction of its width/height.
    pub pad_frac: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            enabled: false,
            sigma: 3.4,
            threshold: 10,
            min_area: 64.0,
            pad_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub gamma: GammaConfig,
    pub roi: RoiConfig,
    pub color_space: PipelineColorSpace,
}

/// Color space the downstream detector sees. Grayscale is excluded: the
/// classifier needs color evidence from the original frame either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PipelineColorSpace {
    #[default]
    Rgb,
    Hsv,
    Ycbcr,
}

impl From<PipelineColorSpace> for ColorSpace {
    fn from(p: PipelineColorSpace) -> ColorSpace {
        match p {
            PipelineColorSpace::Rgb => ColorSpace::Rgb,
            PipelineColorSpace::Hsv => ColorSpace::Hsv,
            PipelineColorSpace::Ycbcr => ColorSpace::Ycbcr,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.value.is_finite() || self.gamma.value <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma.value must be positive, got {}",
                self.gamma.value
            )));
        }
        if !self.roi.sigma.is_finite() || self.roi.sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "roi.sigma must be positive, got {}",
                self.roi.sigma
            )));
        }
        if !self.roi.pad_frac.is_finite() || self.roi.pad_frac < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "roi.pad_frac must be non-negative, got {}",
                self.roi.pad_frac
            )));
        }
        if !self.roi.min_area.is_finite() || self.roi.min_area < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "roi.min_area must be non-negative, got {}",
                self.roi.min_area
            )));
        }
        Ok(())
    }
}

/// Lookup table for `round(255 * (v/255)^gamma)`.
pub fn gamma_table(gamma: f64) -> Result<[u8; 256]> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut table = [0u8; 256];
    for (v, slot) in table.iter_mut().enumerate() {
        *slot = (255.0 * (v as f64 / 255.0).powf(gamma)).round() as u8;
    }
    Ok(table)
}

/// Applies per-channel gamma correction. `gamma < 1` brightens midtones,
/// `gamma > 1` darkens them; 0 and 255 are fixed points.
pub fn gamma_correct(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    let table = gamma_table(gamma)?;
    let data = img.data().iter().map(|&v| table[v as usize]).collect();
    ImageBuffer::from_raw(img.width(), img.height(), img.color_space(), data)
}

/// Separable Gaussian blur of a grayscale buffer with replicated edges.
/// Kernel radius is `round(3 * sigma)`, at least 1.
pub fn gaussian_blur_gray(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    assert_eq!(img.color_space(), ColorSpace::Grayscale);
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).round().max(1.0) as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for k in -radius..=radius {
        kernel.push((-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= norm;
    }

    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.data();
    let mut horiz = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        let row = (y * w) as usize;
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, wt) in kernel.iter().enumerate() {
                let xi = (x + ki as i64 - radius).clamp(0, w - 1) as usize;
                acc += wt * src[row + xi] as f64;
            }
            horiz[row + x as usize] = acc;
        }
    }
    let mut out = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, wt) in kernel.iter().enumerate() {
                let yi = (y + ki as i64 - radius).clamp(0, h - 1);
                acc += wt * horiz[(yi * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    ImageBuffer::from_raw(img.width(), img.height(), ColorSpace::Grayscale, out)
        .expect("same dimensions as input")
}

/// `|gray - blur(gray)| >= threshold` as a binary mask.
pub fn highpass_mask(gray: &ImageBuffer, sigma: f64, threshold: u8) -> Mask {
    let blurred = gaussian_blur_gray(gray, sigma);
    let mut mask = Mask::new(gray.width(), gray.height());
    for y in 0..gray.height() {
        for x in 0..gray.width() {
            let d = (gray.gray(x, y) as i16 - blurred.gray(x, y) as i16).unsigned_abs();
            if d >= threshold as u16 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

fn to_gray(img: &ImageBuffer) -> ImageBuffer {
    match img.color_space() {
        ColorSpace::Grayscale => img.clone(),
        _ => img
            .convert(ColorSpace::Grayscale)
            .expect("3-channel spaces convert to grayscale"),
    }
}

/// Finds the region of interest: the padded union of the bounding boxes of
/// every outer high-pass contour with area at least `min_area`. Falls back to
/// the full frame when no contour qualifies. Returns the ROI in frame
/// coordinates together with the cropped image.
pub fn extract_roi(img: &ImageBuffer, cfg: &RoiConfig) -> Result<(BoundingBox, ImageBuffer)> {
    let full = BoundingBox::new(0, 0, img.width(), img.height())?;
    let gray = to_gray(img);
    let mask = highpass_mask(&gray, cfg.sigma, cfg.threshold);
    let mut union: Option<BoundingBox> = None;
    for c in find_contours(&mask) {
        if c.is_hole || contour_area(&c.points) < cfg.min_area {
            continue;
        }
        let bb = bounding_box(&c.points);
        union = Some(match union {
            Some(u) => u.hull(&bb),
            None => bb,
        });
    }
    let roi = match union {
        Some(u) => {
            let pad_x = (cfg.pad_frac * u.width() as f64).round() as u32;
            let pad_y = (cfg.pad_frac * u.height() as f64).round() as u32;
            let padded = BoundingBox::new(
                u.x_min().saturating_sub(pad_x),
                u.y_min().saturating_sub(pad_y),
                u.x_max().saturating_add(pad_x),
                u.y_max().saturating_add(pad_y),
            )?;
            padded.clip(img.width(), img.height()).unwrap_or(full)
        }
        None => full,
    };
    let crop = img.crop(&roi)?;
    Ok((roi, crop))
}

/// Outcome of checking whether an ROI still contains all annotated objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiCoverage {
    pub covered: bool,
    /// Ground-truth boxes not fully inside the ROI.
    pub violations: Vec<BoundingBox>,
}

/// An ROI is valid for supervised frames only if every ground-truth box lies
/// entirely inside it; anything cropped away would silently become a false
/// negative downstream.
pub fn check_roi_covers_ground_truth(roi: &BoundingBox, truth: &[BoundingBox]) -> RoiCoverage {
    let violations: Vec<BoundingBox> = truth
        .iter()
        .filter(|gt| !roi.contains(gt))
        .copied()
        .collect();
    RoiCoverage {
        covered: violations.is_empty(),
        violations,
    }
}

/// Full preprocessing chain: gamma (if enabled) -> ROI crop (if enabled) ->
/// color-space conversion. Returns the ROI box in original-frame coordinates
/// when cropping happened, so detections can be mapped back.
pub fn apply(
    img: &ImageBuffer,
    cfg: &PreprocessConfig,
) -> Result<(Option<BoundingBox>, ImageBuffer)> {
    cfg.validate()?;
    let mut work = if cfg.gamma.enabled {
        gamma_correct(img, cfg.gamma.value)?
    } else {
        img.clone()
    };
    let mut roi = None;
    if cfg.roi.enabled {
        let (bb, crop) = extract_roi(&work, &cfg.roi)?;
        roi = Some(bb);
        work = crop;
    }
    let target: ColorSpace = cfg.color_space.into();
    let out = if work.color_space() == target {
        work
    } else if work.color_space() == ColorSpace::Grayscale {
        // Grayscale input frames stay grayscale; the detector runs on
        // intensity anyway and the classifier reads the original frame.
        work
    } else {
        work.convert(target)?
    };
    Ok((roi, out))
}
