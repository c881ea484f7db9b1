//! Evidence scorers for the component classifier.
//!
//! Each scorer turns one cue from a detected box into a per-class score
//! vector: the primitive shape ([`shape_score`]), the HSV color composition
//! of the crop ([`color_percentages`] / [`color_score`]), and two intensity
//! texture statistics — variance and histogram entropy — looked up against
//! calibrated per-class frequency tables ([`texture_relative_frequency`] /
//! [`texture_score`]).

mod color;
mod shape;
mod texture;

pub use color::{
    color_percentages, color_score, ColorPercentages, ColorRangeConfig, HsvRange, SemanticColor,
};
pub use shape::shape_score;
pub use texture::{
    bin_index, calibrate_texture_lut, entropy, texture_relative_frequency, texture_score,
    variance, BinRule, ClassHistogram, MetricTable, RelativeFrequencies, TextureLut,
    TextureMetric, ENTROPY_DOMAIN, LUT_FORMAT_TAG, VARIANCE_DOMAIN,
};
