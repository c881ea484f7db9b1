//! Primitive-shape detection: a provider contract, a file-replay provider
//! for detections exported from an external detector, a classical geometric
//! provider built on contour analysis, and the shape-detector overlap
//! metric.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::{
    approx_polygon, bounding_box, circularity, contour_area, contour_perimeter, corner_angle_deg,
    find_contours, Contour,
};
use crate::domain::{rasterize_union, BoundingBox, Detection, Mask, ShapeClass};
use crate::error::{Error, Result};
use crate::labelfile;
use crate::preprocess::highpass_mask;
use crate::raster::{luma, ColorSpace, ImageBuffer};

/// A source of primitive-shape detections for one image. `stem` identifies
/// the frame (file stem for replayed detections); detections are clipped to
/// the frame with confidences in [0, 1].
pub trait ShapeDetectionProvider {
    fn name(&self) -> &str;
    fn detect(&self, stem: &str, image: &ImageBuffer) -> Result<Vec<Detection<ShapeClass>>>;
}

/// Runs a provider over one image.
pub fn detect_shapes(
    provider: &dyn ShapeDetectionProvider,
    stem: &str,
    image: &ImageBuffer,
) -> Result<Vec<Detection<ShapeClass>>> {
    provider.detect(stem, image)
}

/// Replays per-image detection files (`<stem>.txt`, one
/// `class_id confidence cx cy w h` line per detection) from a directory.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn open(dir: &Path) -> Result<ReplayProvider> {
        if !dir.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "replay detection directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ReplayProvider {
            dir: dir.to_path_buf(),
        })
    }
}

impl ShapeDetectionProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn detect(&self, stem: &str, image: &ImageBuffer) -> Result<Vec<Detection<ShapeClass>>> {
        let path = self.dir.join(format!("{stem}.txt"));
        if !path.is_file() {
            return Err(Error::MissingDetections(stem.to_string()));
        }
        let records = labelfile::read_detections(&path)?;
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            let shape = ShapeClass::from_class_id(r.nbox.class_id).ok_or_else(|| {
                Error::MalformedAnnotation(format!(
                    "{}: class id {} is not a shape class",
                    path.display(),
                    r.nbox.class_id
                ))
            })?;
            let bbox = r.nbox.to_pixel(image.width(), image.height())?;
            out.push(Detection::new(bbox, shape, r.confidence)?);
        }
        Ok(out)
    }
}

/// How the geometric provider separates shapes from background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizeMode {
    /// Threshold |pixel - background| where the background level is the
    /// most common intensity along the frame border. Shapes come out as
    /// filled regions.
    #[default]
    BackgroundDiff,
    /// Threshold |pixel - blurred| (the same high-pass used for ROI
    /// extraction). Shapes come out as edge bands, so ring detection looks
    /// for the nested inner band instead of a filled hole.
    HighPass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricConfig {
    pub binarize: BinarizeMode,
    /// Binarization threshold on the intensity difference.
    pub threshold: u8,
    /// Blur sigma for the high-pass mode.
    pub highpass_sigma: f64,
    /// Polygon-approximation epsilon as a fraction of contour perimeter.
    pub epsilon_frac: f64,
    /// Contours below this area are ignored.
    pub min_area: f64,
    /// 4*pi*A/P^2 at or above this reads as a circle.
    pub circularity_min: f64,
    /// Allowed deviation from 90 degrees for rectangle corners.
    pub right_angle_tol_deg: f64,
    /// A hole smaller than this fraction of its shape is noise.
    pub hole_area_frac: f64,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        GeometricConfig {
            binarize: BinarizeMode::BackgroundDiff,
            threshold: 12,
            highpass_sigma: 2.0,
            epsilon_frac: 0.03,
            min_area: 100.0,
            circularity_min: 0.8,
            right_angle_tol_deg: 15.0,
            hole_area_frac: 0.05,
        }
    }
}

impl GeometricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_frac > 0.0 && self.epsilon_frac <= 0.2) {
            return Err(Error::InvalidConfig(format!(
                "geometric.epsilon_frac must be in (0, 0.2], got {}",
                self.epsilon_frac
            )));
        }
        if !(self.min_area > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric.min_area must be positive, got {}",
                self.min_area
            )));
        }
        if !(self.circularity_min > 0.0 && self.circularity_min <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric.circularity_min must be in (0, 1], got {}",
                self.circularity_min
            )));
        }
        if !(self.right_angle_tol_deg > 0.0 && self.right_angle_tol_deg <= 45.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric.right_angle_tol_deg must be in (0, 45], got {}",
                self.right_angle_tol_deg
            )));
        }
        if !(self.hole_area_frac > 0.0 && self.hole_area_frac <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric.hole_area_frac must be in (0, 1], got {}",
                self.hole_area_frac
            )));
        }
        if self.threshold == 0 {
            return Err(Error::InvalidConfig(
                "geometric.threshold must be at least 1".to_string(),
            ));
        }
        if !(self.highpass_sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "geometric.highpass_sigma must be positive, got {}",
                self.highpass_sigma
            )));
        }
        Ok(())
    }
}

/// Classical contour-based shape detector: binarize, trace borders with
/// hierarchy, then classify each outer contour by circularity and polygon
/// approximation. Confidence is the fit quality (circularity for circles
/// and rings, corner-angle regularity for rectangles and triangles).
#[derive(Debug, Clone)]
pub struct GeometricProvider {
    cfg: GeometricConfig,
}

impl GeometricProvider {
    pub fn new(cfg: GeometricConfig) -> Result<GeometricProvider> {
        cfg.validate()?;
        Ok(GeometricProvider { cfg })
    }

    pub fn config(&self) -> &GeometricConfig {
        &self.cfg
    }
}

fn grayscale_of(image: &ImageBuffer) -> ImageBuffer {
    match image.color_space() {
        ColorSpace::Grayscale => image.clone(),
        ColorSpace::Rgb => image.to_gray_with(|(r, g, b)| luma(r, g, b)),
        _ => image
            .convert(ColorSpace::Rgb)
            .expect("3-channel spaces convert to RGB")
            .to_gray_with(|(r, g, b)| luma(r, g, b)),
    }
}

/// Most common intensity along the frame border (ties break low).
fn border_mode(gray: &ImageBuffer) -> u8 {
    let (w, h) = (gray.width(), gray.height());
    let mut counts = [0u64; 256];
    for x in 0..w {
        counts[gray.gray(x, 0) as usize] += 1;
        counts[gray.gray(x, h - 1) as usize] += 1;
    }
    for y in 1..h.saturating_sub(1) {
        counts[gray.gray(0, y) as usize] += 1;
        counts[gray.gray(w - 1, y) as usize] += 1;
    }
    let mut best = 0usize;
    for v in 1..256 {
        if counts[v] > counts[best] {
            best = v;
        }
    }
    best as u8
}

fn background_diff_mask(gray: &ImageBuffer, threshold: u8) -> Mask {
    let bg = border_mode(gray) as i16;
    let mut mask = Mask::new(gray.width(), gray.height());
    for y in 0..gray.height() {
        for x in 0..gray.width() {
            if (gray.gray(x, y) as i16 - bg).unsigned_abs() >= threshold as u16 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

struct ShapeRead {
    shape: ShapeClass,
    confidence: f64,
    /// Contour indices swallowed by this shape (the inner edge band of a
    /// ring in high-pass mode) that must not produce their own detections.
    consumed: Vec<usize>,
}

fn classify_contour(
    idx: usize,
    contours: &[Contour],
    children: &[Vec<usize>],
    cfg: &GeometricConfig,
) -> Option<ShapeRead> {
    let c = &contours[idx];
    let area = contour_area(&c.points);
    if area < cfg.min_area {
        return None;
    }
    let circ = circularity(&c.points);
    if circ >= cfg.circularity_min {
        let significant_holes = children[idx]
            .iter()
            .copied()
            .filter(|&h| contours[h].is_hole && contour_area(&contours[h].points) >= cfg.hole_area_frac * area);
        let (is_ring, consumed) = match cfg.binarize {
            BinarizeMode::BackgroundDiff => {
                // A filled disc has no significant hole; an annulus does.
                let ring = significant_holes
                    .into_iter()
                    .any(|h| circularity(&contours[h].points) >= cfg.circularity_min);
                (ring, Vec::new())
            }
            BinarizeMode::HighPass => {
                // Both discs and annuli binarize to edge bands with a hole;
                // only an annulus nests a second, inner edge band.
                let mut consumed = Vec::new();
                for h in significant_holes {
                    for &g in &children[h] {
                        let gc = &contours[g];
                        if !gc.is_hole
                            && contour_area(&gc.points) >= cfg.hole_area_frac * area
                            && circularity(&gc.points) >= cfg.circularity_min
                        {
                            consumed.push(g);
                            consumed.extend(descendants(g, children));
                        }
                    }
                }
                (!consumed.is_empty(), consumed)
            }
        };
        return Some(ShapeRead {
            shape: if is_ring {
                ShapeClass::Ring
            } else {
                ShapeClass::Circle
            },
            confidence: circ.clamp(0.0, 1.0),
            consumed,
        });
    }

    let epsilon = cfg.epsilon_frac * contour_perimeter(&c.points);
    let poly = approx_polygon(&c.points, epsilon);
    let angles: Vec<f64> = (0..poly.len())
        .map(|i| {
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let next = poly[(i + 1) % poly.len()];
            corner_angle_deg(prev, poly[i], next)
        })
        .collect();
    match poly.len() {
        3 => {
            let max_dev = angles
                .iter()
                .map(|a| (a - 60.0).abs())
                .fold(0.0, f64::max);
            Some(ShapeRead {
                shape: ShapeClass::Triangle,
                confidence: (1.0 - max_dev / 60.0).clamp(0.0, 1.0),
                consumed: Vec::new(),
            })
        }
        4 => {
            let max_dev = angles
                .iter()
                .map(|a| (a - 90.0).abs())
                .fold(0.0, f64::max);
            if max_dev <= cfg.right_angle_tol_deg {
                Some(ShapeRead {
                    shape: ShapeClass::Rectangle,
                    confidence: (1.0 - max_dev / 90.0).clamp(0.0, 1.0),
                    consumed: Vec::new(),
                })
            } else {
                None
            }
        }
        _ => None,
    }
}

fn descendants(idx: usize, children: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = children[idx].clone();
    while let Some(i) = stack.pop() {
        out.push(i);
        stack.extend(children[i].iter().copied());
    }
    out
}

impl ShapeDetectionProvider for GeometricProvider {
    fn name(&self) -> &str {
        "geometric"
    }

    fn detect(&self, _stem: &str, image: &ImageBuffer) -> Result<Vec<Detection<ShapeClass>>> {
        let gray = grayscale_of(image);
        let mask = match self.cfg.binarize {
            BinarizeMode::BackgroundDiff => background_diff_mask(&gray, self.cfg.threshold),
            BinarizeMode::HighPass => {
                highpass_mask(&gray, self.cfg.highpass_sigma, self.cfg.threshold)
            }
        };
        let contours = find_contours(&mask);
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); contours.len()];
        for (i, c) in contours.iter().enumerate() {
            if let Some(p) = c.parent {
                children[p].push(i);
            }
        }

        let mut consumed = vec![false; contours.len()];
        let mut out = Vec::new();
        for (i, c) in contours.iter().enumerate() {
            if c.is_hole || consumed[i] {
                continue;
            }
            if let Some(read) = classify_contour(i, &contours, &children, &self.cfg) {
                for j in read.consumed {
                    consumed[j] = true;
                }
                out.push(Detection::new(
                    bounding_box(&c.points),
                    read.shape,
                    read.confidence,
                )?);
            }
        }
        Ok(out)
    }
}

/// Shape-detector overlap for one frame: the fraction of the ground-truth
/// union mask covered by the union of predicted boxes. Overlapping boxes on
/// either side count once. An empty ground truth reads as full coverage
/// with `vacuous` set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdOverlap {
    pub value: f64,
    pub vacuous: bool,
}

pub fn sd_overlap(
    gts: &[BoundingBox],
    preds: &[BoundingBox],
    width: u32,
    height: u32,
) -> SdOverlap {
    let gt_mask = rasterize_union(gts, width, height);
    let gt_area = gt_mask.count_set();
    if gt_area == 0 {
        return SdOverlap {
            value: 1.0,
            vacuous: true,
        };
    }
    let pred_mask = rasterize_union(preds, width, height);
    SdOverlap {
        value: gt_mask.intersection_count(&pred_mask) as f64 / gt_area as f64,
        vacuous: false,
    }
}

/// One frame's boxes for batch overlap evaluation.
#[derive(Debug, Clone)]
pub struct OverlapInput {
    pub stem: String,
    pub gts: Vec<BoundingBox>,
    pub preds: Vec<BoundingBox>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOverlap {
    pub stem: String,
    pub overlap: SdOverlap,
    /// Predictions whose center pixel lies inside the ground-truth union.
    pub inside: u64,
    pub outside: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOverlap {
    pub frames: Vec<FrameOverlap>,
    pub mean: f64,
    pub inside: u64,
    pub outside: u64,
}

pub fn batch_sd_overlap(items: &[OverlapInput]) -> BatchOverlap {
    let mut frames = Vec::with_capacity(items.len());
    let mut sum = 0.0;
    let (mut inside_total, mut outside_total) = (0u64, 0u64);
    for item in items {
        let overlap = sd_overlap(&item.gts, &item.preds, item.width, item.height);
        let gt_mask = rasterize_union(&item.gts, item.width, item.height);
        let (mut inside, mut outside) = (0u64, 0u64);
        for p in &item.preds {
            let (cx, cy) = p.center();
            let px = (cx.floor() as u32).min(item.width - 1);
            let py = (cy.floor() as u32).min(item.height - 1);
            if gt_mask.get(px, py) {
                inside += 1;
            } else {
                outside += 1;
            }
        }
        sum += overlap.value;
        inside_total += inside;
        outside_total += outside;
        frames.push(FrameOverlap {
            stem: item.stem.clone(),
            overlap,
            inside,
            outside,
        });
    }
    let mean = if frames.is_empty() {
        0.0
    } else {
        sum / frames.len() as f64
    };
    BatchOverlap {
        frames,
        mean,
        inside: inside_total,
        outside: outside_total,
    }
}

/// Pairs `<stem>.txt` label and detection files from two directories into
/// overlap inputs, erroring on any stem present on only one side.
pub fn load_overlap_inputs(
    labels_dir: &Path,
    detections_dir: &Path,
    width: u32,
    height: u32,
) -> Result<Vec<OverlapInput>> {
    let pairs = labelfile::pair_stems(labels_dir, "txt", detections_dir, "txt")?;
    let mut out = Vec::with_capacity(pairs.len());
    for (stem, label_path, det_path) in pairs {
        let gts = labelfile::read_labels(&label_path)?
            .iter()
            .map(|b| b.to_pixel(width, height))
            .collect::<Result<Vec<_>>>()?;
        let preds = labelfile::read_detections(&det_path)?
            .iter()
            .map(|d| d.nbox.to_pixel(width, height))
            .collect::<Result<Vec<_>>>()?;
        out.push(OverlapInput {
            stem,
            gts,
            preds,
            width,
            height,
        });
    }
    Ok(out)
}
