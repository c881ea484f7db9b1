//! Context-based spacecraft component detection.
//!
//! The pipeline turns a camera frame into labelled component boxes in three
//! stages: preprocessing (gamma correction, region-of-interest cropping,
//! color-space selection), primitive-shape detection (circles, rectangles,
//! triangles, rings — either replayed from files or found geometrically via
//! contour analysis), and rule-based classification that votes shape, color,
//! and texture evidence into one of six component classes (antenna, body,
//! solar panel, thruster, white radiator, unknown).
//!
//! Around that core live a synthetic shape-dataset generator used for
//! detector calibration and regression fixtures ([`shapegen`]), a fusion step
//! that merges these context-based detections with an external data-driven
//! detector's output ([`fusion`]), and standard object-detection evaluation
//! (precision/recall/F1, AP, mAP@0.5) in [`eval`].

pub mod config;
pub mod contour;
pub mod domain;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod labelfile;
pub mod preprocess;
pub mod raster;
pub mod scorers;
pub mod shapedetect;
pub mod shapegen;
pub mod syc;

pub use error::{Error, Result};
