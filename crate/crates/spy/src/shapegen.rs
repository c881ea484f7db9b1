//! Synthetic primitive-shape datasets: single-shape frames or multi-shape
//! collages, with optional rotation/shear/blur/noise augmentation.
//!
//! Every frame is generated from its own deterministic RNG stream
//! (`seed` + frame index), so datasets are byte-identical across runs and
//! independent of generation order or parallelism. Shapes render with 4x4
//! supersampled coverage against a flat background from a three-tone palette
//! (black / mid-gray / white), with fill intensity forced at least
//! `contrast_margin` levels away from the background. Annotations are the
//! tight bounds of the pixels each shape actually lit.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, NormalizedBox, ShapeClass};
use crate::error::{Error, Result};
use crate::labelfile;
use crate::preprocess::gaussian_blur_gray;
use crate::raster::{ColorSpace, ImageBuffer};

/// Background palette (dark / mid / bright).
pub const BACKGROUNDS: [u8; 3] = [0, 128, 255];

/// Size ranges as fractions of the frame edge.
pub const CIRCLE_RADIUS_FRAC: (f64, f64) = (0.05, 0.10);
pub const RING_OUTER_FRAC: (f64, f64) = (0.05, 0.10);
/// Ring hole radius as a fraction of the outer radius.
pub const RING_INNER_OF_OUTER: (f64, f64) = (0.4, 0.8);
pub const RECT_SIDE_FRAC: (f64, f64) = (0.05, 0.5);
pub const TRIANGLE_SIDE_FRAC: (f64, f64) = (0.05, 0.10);

/// Tolerance absorbing trigonometric roundoff when analytic boxes are
/// snapped to the pixel grid.
const GRID_SNAP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndersizePolicy {
    /// Drop boxes that fall below the minimum area after warping.
    #[default]
    Remove,
    /// Fail the frame instead.
    Reject,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub rotate: bool,
    pub shear: bool,
    pub blur: bool,
    pub noise: bool,
    pub max_rotation_deg: f64,
    pub max_shear_deg: f64,
    pub max_blur_sigma: f64,
    pub max_noise_sigma: f64,
    /// Minimum pixel area a warped box must keep.
    pub min_box_area: f64,
    pub undersize: UndersizePolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotate: true,
            shear: true,
            blur: true,
            noise: true,
            max_rotation_deg: 180.0,
            max_shear_deg: 15.0,
            max_blur_sigma: 2.0,
            max_noise_sigma: 15.0,
            min_box_area: 16.0,
            undersize: UndersizePolicy::Remove,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..90.0).contains(&self.max_shear_deg) {
            return Err(Error::InvalidConfig(format!(
                "augment.max_shear_deg must be in [0, 90), got {}",
                self.max_shear_deg
            )));
        }
        for (name, v) in [
            ("max_rotation_deg", self.max_rotation_deg),
            ("max_blur_sigma", self.max_blur_sigma),
            ("max_noise_sigma", self.max_noise_sigma),
            ("min_box_area", self.min_box_area),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "augment.{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub frame_size: u32,
    /// Total number of frames. Single-shape frames cycle through the four
    /// shape classes round-robin, keeping per-class counts balanced.
    pub frames: u64,
    /// Draw several shapes per frame instead of one.
    pub collage: bool,
    pub shapes_per_collage: (u32, u32),
    /// Largest allowed IoU between the boxes of collage shapes (0 keeps
    /// them disjoint).
    pub max_collage_iou: f64,
    /// Minimum |fill - background| intensity separation.
    pub contrast_margin: u8,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            frame_size: 640,
            frames: 0,
            collage: false,
            shapes_per_collage: (2, 6),
            max_collage_iou: 0.0,
            contrast_margin: 30,
            seed: 0,
            augment: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 64 {
            return Err(Error::InvalidConfig(format!(
                "frame_size must be at least 64, got {}",
                self.frame_size
            )));
        }
        let (lo, hi) = self.shapes_per_collage;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "shapes_per_collage must satisfy 1 <= min <= max, got ({lo}, {hi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.max_collage_iou) {
            return Err(Error::InvalidConfig(format!(
                "max_collage_iou must be in [0, 1], got {}",
                self.max_collage_iou
            )));
        }
        if self.contrast_margin == 0 || self.contrast_margin > 120 {
            return Err(Error::InvalidConfig(format!(
                "contrast_margin must be in [1, 120], got {}",
                self.contrast_margin
            )));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// Geometry of one shape to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub shape: ShapeClass,
    pub cx: f64,
    pub cy: f64,
    pub params: ShapeParams,
    pub intensity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Circle { radius: f64 },
    Rectangle { width: f64, height: f64 },
    Triangle { side: f64, orientation: f64 },
    Ring { outer: f64, inner: f64 },
}

impl ShapeSpec {
    /// Conservative half-extents along x and y.
    fn half_extents(&self) -> (f64, f64) {
        match self.params {
            ShapeParams::Circle { radius } => (radius, radius),
            ShapeParams::Rectangle { width, height } => (width / 2.0, height / 2.0),
            // Circumradius bounds any orientation.
            ShapeParams::Triangle { side, .. } => {
                let r = side / 3f64.sqrt();
                (r, r)
            }
            ShapeParams::Ring { outer, .. } => (outer, outer),
        }
    }

    /// Pixel box guaranteed to contain every lit pixel.
    fn analytic_box(&self) -> (i64, i64, i64, i64) {
        let (hx, hy) = self.half_extents();
        (
            (self.cx - hx + GRID_SNAP).floor() as i64,
            (self.cy - hy + GRID_SNAP).floor() as i64,
            (self.cx + hx - GRID_SNAP).ceil() as i64,
            (self.cy + hy - GRID_SNAP).ceil() as i64,
        )
    }

    fn triangle_vertices(&self) -> [(f64, f64); 3] {
        let ShapeParams::Triangle { side, orientation } = self.params else {
            unreachable!("triangle_vertices on {:?}", self.params)
        };
        let r = side / 3f64.sqrt();
        std::array::from_fn(|k| {
            let a = orientation + k as f64 * std::f64::consts::TAU / 3.0;
            (self.cx + r * a.cos(), self.cy + r * a.sin())
        })
    }

    fn contains(&self, x: f64, y: f64, tri: &[(f64, f64); 3]) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        match self.params {
            ShapeParams::Circle { radius } => dx * dx + dy * dy <= radius * radius,
            ShapeParams::Rectangle { width, height } => {
                dx.abs() <= width / 2.0 && dy.abs() <= height / 2.0
            }
            ShapeParams::Ring { outer, inner } => {
                let d2 = dx * dx + dy * dy;
                d2 <= outer * outer && d2 >= inner * inner
            }
            ShapeParams::Triangle { .. } => {
                let mut pos = false;
                let mut neg = false;
                for k in 0..3 {
                    let (ax, ay) = tri[k];
                    let (bx, by) = tri[(k + 1) % 3];
                    let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                    pos |= cross > 0.0;
                    neg |= cross < 0.0;
                }
                !(pos && neg)
            }
        }
    }
}

/// One generated frame: grayscale image plus its tight annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFrame {
    pub image: ImageBuffer,
    pub annotations: Vec<NormalizedBox>,
    pub background: u8,
}

/// The RNG stream for a frame: all frames share the seed-derived key but run
/// on separate streams, so any frame can be generated independently.
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

fn sample_intensity(rng: &mut ChaCha8Rng, background: u8, margin: u8) -> u8 {
    let valid: Vec<u8> = (0..=255u16)
        .map(|v| v as u8)
        .filter(|&v| (v as i16 - background as i16).unsigned_abs() >= margin as u16)
        .collect();
    debug_assert!(!valid.is_empty());
    valid[rng.random_range(0..valid.len())]
}

fn sample_spec(
    rng: &mut ChaCha8Rng,
    shape: ShapeClass,
    cfg: &GenConfig,
    background: u8,
) -> ShapeSpec {
    let s = cfg.frame_size as f64;
    let intensity = sample_intensity(rng, background, cfg.contrast_margin);
    let params = match shape {
        ShapeClass::Circle => ShapeParams::Circle {
            radius: rng.random_range(CIRCLE_RADIUS_FRAC.0..=CIRCLE_RADIUS_FRAC.1) * s,
        },
        ShapeClass::Rectangle => ShapeParams::Rectangle {
            width: rng.random_range(RECT_SIDE_FRAC.0..=RECT_SIDE_FRAC.1) * s,
            height: rng.random_range(RECT_SIDE_FRAC.0..=RECT_SIDE_FRAC.1) * s,
        },
        ShapeClass::Triangle => ShapeParams::Triangle {
            side: rng.random_range(TRIANGLE_SIDE_FRAC.0..=TRIANGLE_SIDE_FRAC.1) * s,
            orientation: rng.random_range(0.0..std::f64::consts::TAU),
        },
        ShapeClass::Ring => {
            let outer = rng.random_range(RING_OUTER_FRAC.0..=RING_OUTER_FRAC.1) * s;
            ShapeParams::Ring {
                outer,
                inner: rng.random_range(RING_INNER_OF_OUTER.0..=RING_INNER_OF_OUTER.1) * outer,
            }
        }
    };
    let mut spec = ShapeSpec {
        shape,
        cx: 0.0,
        cy: 0.0,
        params,
        intensity,
    };
    let (hx, hy) = spec.half_extents();
    spec.cx = rng.random_range((hx + 1.0)..=(s - hx - 1.0));
    spec.cy = rng.random_range((hy + 1.0)..=(s - hy - 1.0));
    spec
}

fn boxes_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let ix = (a.2.min(b.2) - a.0.max(b.0)).max(0);
    let iy = (a.3.min(b.3) - a.1.max(b.1)).max(0);
    let inter = (ix * iy) as f64;
    if inter == 0.0 {
        return 0.0;
    }
    let area = |r: (i64, i64, i64, i64)| ((r.2 - r.0) * (r.3 - r.1)) as f64;
    inter / (area(a) + area(b) - inter)
}

/// Draws `spec` with 4x4 supersampled coverage, returning the tight bounds
/// of the pixels whose value moved off the background.
fn render_shape(img: &mut ImageBuffer, spec: &ShapeSpec, background: u8) -> Option<BoundingBox> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0, x1, y1) = spec.analytic_box();
    let tri = match spec.params {
        ShapeParams::Triangle { .. } => spec.triangle_vertices(),
        _ => [(0.0, 0.0); 3],
    };
    let fill = spec.intensity as f64;
    let bg = background as f64;
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in y0.max(0)..(y1 + 1).min(h) {
        for x in x0.max(0)..(x1 + 1).min(w) {
            let mut hits = 0u32;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0;
                    if spec.contains(px, py, &tri) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let coverage = hits as f64 / 16.0;
            let value = (bg + coverage * (fill - bg)).round() as u8;
            if value == background {
                continue;
            }
            img.set_gray(x as u32, y as u32, value);
            let (px, py) = (x as u32, y as u32);
            bounds = Some(match bounds {
                None => (px, py, px, py),
                Some((a, b, c, d)) => (a.min(px), b.min(py), c.max(px), d.max(py)),
            });
        }
    }
    bounds.map(|(a, b, c, d)| BoundingBox::new(a, b, c + 1, d + 1).expect("non-empty bounds"))
}

/// Generates frame `frame_index` of the dataset described by `cfg`.
pub fn generate_frame(cfg: &GenConfig, frame_index: u64) -> Result<GeneratedFrame> {
    cfg.validate()?;
    let mut rng = frame_rng(cfg.seed, frame_index);
    let background = BACKGROUNDS[rng.random_range(0..BACKGROUNDS.len())];

    let classes: Vec<ShapeClass> = if cfg.collage {
        let (lo, hi) = cfg.shapes_per_collage;
        let n = rng.random_range(lo..=hi);
        (0..n)
            .map(|_| ShapeClass::ALL[rng.random_range(0..ShapeClass::ALL.len())])
            .collect()
    } else {
        vec![ShapeClass::ALL[(frame_index % 4) as usize]]
    };

    let mut specs: Vec<ShapeSpec> = Vec::with_capacity(classes.len());
    let mut placed: Vec<(i64, i64, i64, i64)> = Vec::with_capacity(classes.len());
    for &class in &classes {
        let mut accepted = false;
        for _attempt in 0..50 {
            let spec = sample_spec(&mut rng, class, cfg, background);
            let bb = spec.analytic_box();
            if placed.iter().all(|&p| boxes_iou(p, bb) <= cfg.max_collage_iou) {
                placed.push(bb);
                specs.push(spec);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Generation {
                frame: frame_index,
                msg: format!("could not place a {class} after 50 attempts"),
            });
        }
    }

    let mut image = ImageBuffer::new(cfg.frame_size, cfg.frame_size, ColorSpace::Grayscale);
    image.fill(&[background]);
    let mut annotations = Vec::with_capacity(specs.len());
    for spec in &specs {
        let bounds = render_shape(&mut image, spec, background).ok_or(Error::Generation {
            frame: frame_index,
            msg: format!("{} rendered no visible pixels", spec.shape),
        })?;
        annotations.push(NormalizedBox::from_pixel(
            &bounds,
            cfg.frame_size,
            cfg.frame_size,
            spec.shape.class_id(),
        ));
    }

    let (image, annotations) = match &cfg.augment {
        Some(acfg) => augment(&image, &annotations, acfg, &mut rng).map_err(|e| match e {
            Error::MalformedAnnotation(msg) => Error::Generation {
                frame: frame_index,
                msg,
            },
            other => other,
        })?,
        None => (image, annotations),
    };

    Ok(GeneratedFrame {
        image,
        annotations,
        background,
    })
}

/// Rotation (degrees) then shear (degrees, x by y) composed about the frame
/// center: the image is inverse-mapped with bilinear sampling (clamp to
/// edge); labels are the axis-aligned bounds of their forward-mapped
/// corners, clipped to the frame.
pub fn apply_affine(
    img: &ImageBuffer,
    boxes: &[NormalizedBox],
    rotation_deg: f64,
    shear_deg: f64,
    min_box_area: f64,
    undersize: UndersizePolicy,
) -> Result<(ImageBuffer, Vec<NormalizedBox>)> {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let th = rotation_deg.to_radians();
    let sh = shear_deg.to_radians().tan();
    // M = R(theta) * Shear(phi); both have unit determinant.
    let m = [
        [th.cos(), th.cos() * sh - th.sin()],
        [th.sin(), th.sin() * sh + th.cos()],
    ];
    let minv = [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]];

    let channels = img.channels() as usize;
    let src = img.data();
    let mut out = vec![0u8; src.len()];
    let sample = |sx: f64, sy: f64, ch: usize| -> f64 {
        let u = sx - 0.5;
        let v = sy - 0.5;
        let x0 = u.floor();
        let y0 = v.floor();
        let fx = u - x0;
        let fy = v - y0;
        let clamp_x = |x: f64| (x.max(0.0) as u32).min(w - 1) as usize;
        let clamp_y = |y: f64| (y.max(0.0) as u32).min(h - 1) as usize;
        let (xa, xb) = (clamp_x(x0), clamp_x(x0 + 1.0));
        let (ya, yb) = (clamp_y(y0), clamp_y(y0 + 1.0));
        let at = |x: usize, y: usize| src[(y * w as usize + x) * channels + ch] as f64;
        at(xa, ya) * (1.0 - fx) * (1.0 - fy)
            + at(xb, ya) * fx * (1.0 - fy)
            + at(xa, yb) * (1.0 - fx) * fy
            + at(xb, yb) * fx * fy
    };
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 + 0.5) - cx;
            let dy = (y as f64 + 0.5) - cy;
            let sx = minv[0][0] * dx + minv[0][1] * dy + cx;
            let sy = minv[1][0] * dx + minv[1][1] * dy + cy;
            for ch in 0..channels {
                out[(y as usize * w as usize + x as usize) * channels + ch] =
                    sample(sx, sy, ch).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let warped = ImageBuffer::from_raw(w, h, img.color_space(), out)?;

    let mut labels = Vec::with_capacity(boxes.len());
    for b in boxes {
        let x_lo = (b.cx - b.w / 2.0) * w as f64;
        let x_hi = (b.cx + b.w / 2.0) * w as f64;
        let y_lo = (b.cy - b.h / 2.0) * h as f64;
        let y_hi = (b.cy + b.h / 2.0) * h as f64;
        let corners = [(x_lo, y_lo), (x_hi, y_lo), (x_lo, y_hi), (x_hi, y_hi)];
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for (px, py) in corners {
            let dx = px - cx;
            let dy = py - cy;
            let nx = m[0][0] * dx + m[0][1] * dy + cx;
            let ny = m[1][0] * dx + m[1][1] * dy + cy;
            min_x = min_x.min(nx);
            min_y = min_y.min(ny);
            max_x = max_x.max(nx);
            max_y = max_y.max(ny);
        }
        let x0 = ((min_x + GRID_SNAP).floor()).max(0.0) as u32;
        let y0 = ((min_y + GRID_SNAP).floor()).max(0.0) as u32;
        let x1 = (((max_x - GRID_SNAP).ceil()).max(0.0) as u32).min(w);
        let y1 = (((max_y - GRID_SNAP).ceil()).max(0.0) as u32).min(h);
        let area = if x1 > x0 && y1 > y0 {
            ((x1 - x0) as f64) * ((y1 - y0) as f64)
        } else {
            0.0
        };
        if area < min_box_area {
            match undersize {
                UndersizePolicy::Remove => continue,
                UndersizePolicy::Reject => {
                    return Err(Error::MalformedAnnotation(format!(
                        "warped box area {area} below minimum {min_box_area}"
                    )))
                }
            }
        }
        let bb = BoundingBox::new(x0, y0, x1, y1).expect("area checked positive");
        labels.push(NormalizedBox::from_pixel(&bb, w, h, b.class_id));
    }
    Ok((warped, labels))
}

fn gaussian_noise(img: &ImageBuffer, sigma: f64, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            (v as f64 + sigma * z).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageBuffer::from_raw(img.width(), img.height(), img.color_space(), data)
        .expect("same length")
}

fn blur_any(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if img.color_space() == ColorSpace::Grayscale {
        return gaussian_blur_gray(img, sigma);
    }
    // Blur each channel independently.
    let n = img.channels() as usize;
    let mut planes = Vec::with_capacity(n);
    for ch in 0..n {
        let plane: Vec<u8> = img.data().iter().skip(ch).step_by(n).copied().collect();
        let buf = ImageBuffer::from_raw(img.width(), img.height(), ColorSpace::Grayscale, plane)
            .expect("plane length");
        planes.push(gaussian_blur_gray(&buf, sigma));
    }
    let mut data = vec![0u8; img.data().len()];
    for (ch, plane) in planes.iter().enumerate() {
        for (i, &v) in plane.data().iter().enumerate() {
            data[i * n + ch] = v;
        }
    }
    ImageBuffer::from_raw(img.width(), img.height(), img.color_space(), data)
        .expect("same length")
}

/// Samples augmentation parameters from `rng` (rotation, shear, blur sigma,
/// noise sigma — in that order, each only if enabled) and applies them.
/// With everything disabled the input comes back unchanged.
pub fn augment(
    img: &ImageBuffer,
    boxes: &[NormalizedBox],
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ImageBuffer, Vec<NormalizedBox>)> {
    cfg.validate()?;
    let rotation = if cfg.rotate {
        rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
    } else {
        0.0
    };
    let shear = if cfg.shear {
        rng.random_range(-cfg.max_shear_deg..=cfg.max_shear_deg)
    } else {
        0.0
    };
    let blur_sigma = if cfg.blur {
        rng.random_range(0.0..=cfg.max_blur_sigma)
    } else {
        0.0
    };
    let noise_sigma = if cfg.noise {
        rng.random_range(0.0..=cfg.max_noise_sigma)
    } else {
        0.0
    };

    let (mut image, mut labels) = if rotation != 0.0 || shear != 0.0 {
        apply_affine(img, boxes, rotation, shear, cfg.min_box_area, cfg.undersize)?
    } else {
        (img.clone(), boxes.to_vec())
    };
    if blur_sigma > 1e-6 {
        image = blur_any(&image, blur_sigma);
    }
    if noise_sigma > 1e-6 {
        image = gaussian_noise(&image, noise_sigma, rng);
    }
    if labels.len() != boxes.len() && matches!(cfg.undersize, UndersizePolicy::Reject) {
        unreachable!("reject policy errors before dropping labels");
    }
    labels.shrink_to_fit();
    Ok((image, labels))
}

/// Sidecar manifest describing a written dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub frame_size: u32,
    pub frames: u64,
    pub collage: bool,
    pub augmented: bool,
    pub class_ids: BTreeMap<String, u32>,
    pub boxes_per_class: BTreeMap<String, u64>,
}

pub const MANIFEST_FORMAT_TAG: &str = "shapegen-manifest-v1";

impl DatasetManifest {
    pub fn new(cfg: &GenConfig) -> DatasetManifest {
        DatasetManifest {
            format: MANIFEST_FORMAT_TAG.to_string(),
            seed: cfg.seed,
            frame_size: cfg.frame_size,
            frames: cfg.frames,
            collage: cfg.collage,
            augmented: cfg.augment.is_some(),
            class_ids: ShapeClass::ALL
                .iter()
                .map(|s| (s.name().to_string(), s.class_id()))
                .collect(),
            boxes_per_class: ShapeClass::ALL
                .iter()
                .map(|s| (s.name().to_string(), 0))
                .collect(),
        }
    }

    pub fn tally(&mut self, annotations: &[NormalizedBox]) {
        for b in annotations {
            if let Some(s) = ShapeClass::from_class_id(b.class_id) {
                *self.boxes_per_class.get_mut(s.name()).expect("seeded") += 1;
            }
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

pub fn frame_stem(index: u64) -> String {
    format!("frame_{index:06}")
}

pub fn ensure_dataset_dirs(out_dir: &Path) -> Result<()> {
    for sub in ["images", "labels"] {
        let p = out_dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(p.clone(), e))?;
    }
    Ok(())
}

/// Writes one frame's PNG and label file.
pub fn write_frame(out_dir: &Path, index: u64, frame: &GeneratedFrame) -> Result<()> {
    let stem = frame_stem(index);
    frame
        .image
        .save_png(&out_dir.join("images").join(format!("{stem}.png")))?;
    labelfile::write_labels(
        &out_dir.join("labels").join(format!("{stem}.txt")),
        &frame.annotations,
    )
}

/// Generates and writes the whole dataset sequentially, returning the
/// manifest (also saved as `manifest.json`).
pub fn write_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    ensure_dataset_dirs(out_dir)?;
    let mut manifest = DatasetManifest::new(cfg);
    for i in 0..cfg.frames {
        let frame = generate_frame(cfg, i)?;
        write_frame(out_dir, i, &frame)?;
        manifest.tally(&frame.annotations);
    }
    manifest.save_json(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
