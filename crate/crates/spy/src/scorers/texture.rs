//! Texture statistics and the calibrated lookup tables behind them.
//!
//! Two scalar statistics summarize a grayscale crop: population variance of
//! the intensities, clamped to `[0, 10000]` for lookups, and Shannon entropy
//! of the 256-bin intensity histogram scaled by 1000 (so the natural range
//! is `[0, 8000]` — up to 8 bits per pixel). Calibration bins each class's
//! training values into a histogram whose bin count follows the
//! interquartile-range rule `2 * IQR / cbrt(n)`; at query time the four class
//! frequencies at the value's bin become relative frequencies, then a score
//! that rebalances away the training-set class imbalance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ClassScoreVector, ComponentClass};
use crate::error::{Error, Result};
use crate::raster::{ColorSpace, ImageBuffer};

pub const VARIANCE_DOMAIN: f64 = 10_000.0;
pub const ENTROPY_DOMAIN: f64 = 8_000.0;
pub const LUT_FORMAT_TAG: &str = "texture-lut-v1";

/// Hard cap on calibrated bin counts, shared by both bin rules.
pub const MAX_BINS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureMetric {
    Variance,
    Entropy,
}

impl TextureMetric {
    pub fn domain(&self) -> f64 {
        match self {
            TextureMetric::Variance => VARIANCE_DOMAIN,
            TextureMetric::Entropy => ENTROPY_DOMAIN,
        }
    }
}

/// Population variance of the crop intensities (unclamped).
pub fn variance(gray: &ImageBuffer) -> Result<f64> {
    assert_eq!(gray.color_space(), ColorSpace::Grayscale);
    let n = gray.pixel_count();
    if n == 0 {
        return Err(Error::EmptyCrop);
    }
    let mean = gray.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let ss = gray
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>();
    Ok(ss / n as f64)
}

/// Histogram entropy in millibits-per-pixel-times-eight... concretely:
/// `-1000 * sum(q_b * log2(q_b))` over the non-empty bins of the 256-bin
/// intensity histogram. 0 for constant crops, 8000 for a perfectly uniform
/// intensity spread.
pub fn entropy(gray: &ImageBuffer) -> Result<f64> {
    assert_eq!(gray.color_space(), ColorSpace::Grayscale);
    let n = gray.pixel_count();
    if n == 0 {
        return Err(Error::EmptyCrop);
    }
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let nf = n as f64;
    let mut h = 0.0;
    for &c in &hist {
        if c > 0 {
            let q = c as f64 / nf;
            h -= q * q.log2();
        }
    }
    Ok((1000.0 * h).max(0.0))
}

/// How the interquartile-range statistic becomes a bin count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinRule {
    /// `round(2 * IQR / cbrt(n))` used directly as the number of bins.
    #[default]
    Count,
    /// `2 * IQR / cbrt(n)` read as a bin *width* over the metric domain.
    Width,
}

/// Linear-interpolation quantile (the common "type 7" rule) on sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

fn bin_count_for(values: &[f64], rule: BinRule, domain: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let stat = 2.0 * iqr / (values.len() as f64).cbrt();
    let count = match rule {
        BinRule::Count => stat.round() as i64,
        BinRule::Width => {
            if stat <= 0.0 {
                1
            } else {
                (domain / stat).ceil() as i64
            }
        }
    };
    count.clamp(1, MAX_BINS as i64) as usize
}

/// Uniform-bin index of `value` over `[0, domain]`; values are clamped into
/// the domain first, and `domain` itself lands in the last bin.
pub fn bin_index(value: f64, domain: f64, bin_count: usize) -> usize {
    debug_assert!(domain > 0.0 && bin_count > 0);
    let v = value.clamp(0.0, domain);
    (((v / domain) * bin_count as f64).floor() as usize).min(bin_count - 1)
}

/// Calibrated histogram of one metric for one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub bin_count: usize,
    /// Raw training-value counts per bin (length `bin_count`).
    pub counts: Vec<u32>,
    /// Number of training crops behind this histogram.
    pub object_count: u32,
}

/// One metric's tables for the four textured classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub domain: f64,
    pub antenna: ClassHistogram,
    pub body: ClassHistogram,
    pub solar: ClassHistogram,
    pub thruster: ClassHistogram,
}

impl MetricTable {
    pub fn class(&self, class: ComponentClass) -> Option<&ClassHistogram> {
        match class {
            ComponentClass::Antenna => Some(&self.antenna),
            ComponentClass::Body => Some(&self.body),
            ComponentClass::Solar => Some(&self.solar),
            ComponentClass::Thruster => Some(&self.thruster),
            _ => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.domain > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "texture lut: {name} domain must be positive"
            )));
        }
        for c in ComponentClass::TEXTURED {
            let h = self.class(c).expect("textured class");
            if h.bin_count == 0 || h.bin_count > MAX_BINS {
                return Err(Error::InvalidConfig(format!(
                    "texture lut: {name}/{c} bin_count {} out of [1, {MAX_BINS}]",
                    h.bin_count
                )));
            }
            if h.counts.len() != h.bin_count {
                return Err(Error::InvalidConfig(format!(
                    "texture lut: {name}/{c} has {} counts for {} bins",
                    h.counts.len(),
                    h.bin_count
                )));
            }
            if h.object_count == 0 {
                return Err(Error::InvalidConfig(format!(
                    "texture lut: {name}/{c} object_count is zero"
                )));
            }
        }
        Ok(())
    }
}

/// The full calibrated texture lookup table, as serialized to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureLut {
    pub format: String,
    pub variance: MetricTable,
    pub entropy: MetricTable,
}

impl TextureLut {
    pub fn metric(&self, metric: TextureMetric) -> &MetricTable {
        match metric {
            TextureMetric::Variance => &self.variance,
            TextureMetric::Entropy => &self.entropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != LUT_FORMAT_TAG {
            return Err(Error::InvalidConfig(format!(
                "texture lut format `{}` is not `{LUT_FORMAT_TAG}`",
                self.format
            )));
        }
        self.variance.validate("variance")?;
        self.entropy.validate("entropy")?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("lut serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<TextureLut> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lut: TextureLut = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        lut.validate()?;
        Ok(lut)
    }
}

/// Builds the lookup table from labelled grayscale crops. Crops labelled
/// with classes outside the four textured ones are ignored; each textured
/// class needs at least one sample. Bin counts are derived per class and per
/// metric from the class's own value spread.
pub fn calibrate_texture_lut(
    samples: &[(ImageBuffer, ComponentClass)],
    rule: BinRule,
) -> Result<TextureLut> {
    let mut var_values: [Vec<f64>; 4] = Default::default();
    let mut ent_values: [Vec<f64>; 4] = Default::default();
    for (crop, class) in samples {
        let Some(slot) = ComponentClass::TEXTURED.iter().position(|c| c == class) else {
            continue;
        };
        var_values[slot].push(variance(crop)?.clamp(0.0, VARIANCE_DOMAIN));
        ent_values[slot].push(entropy(crop)?);
    }
    for (slot, class) in ComponentClass::TEXTURED.into_iter().enumerate() {
        if var_values[slot].is_empty() {
            return Err(Error::EmptyCalibrationClass(class));
        }
    }

    let build = |values: &[Vec<f64>; 4], domain: f64| -> MetricTable {
        let hist = |vals: &[f64]| {
            let bin_count = bin_count_for(vals, rule, domain);
            let mut counts = vec![0u32; bin_count];
            for &v in vals {
                counts[bin_index(v, domain, bin_count)] += 1;
            }
            ClassHistogram {
                bin_count,
                counts,
                object_count: vals.len() as u32,
            }
        };
        MetricTable {
            domain,
            antenna: hist(&values[0]),
            body: hist(&values[1]),
            solar: hist(&values[2]),
            thruster: hist(&values[3]),
        }
    };

    let lut = TextureLut {
        format: LUT_FORMAT_TAG.to_string(),
        variance: build(&var_values, VARIANCE_DOMAIN),
        entropy: build(&ent_values, ENTROPY_DOMAIN),
    };
    lut.validate()?;
    Ok(lut)
}

/// Per-class relative frequency of a metric value, ordered as
/// [`ComponentClass::TEXTURED`]. When every class has zero calibrated mass at
/// the value's bin the result is uniform (0.25 each) with `degenerate` set,
/// so callers can treat it as "no texture evidence".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeFrequencies {
    pub values: [f64; 4],
    pub degenerate: bool,
}

impl RelativeFrequencies {
    pub fn get(&self, class: ComponentClass) -> f64 {
        ComponentClass::TEXTURED
            .iter()
            .position(|&c| c == class)
            .map(|i| self.values[i])
            .unwrap_or(0.0)
    }
}

pub fn texture_relative_frequency(
    lut: &TextureLut,
    metric: TextureMetric,
    value: f64,
) -> RelativeFrequencies {
    let table = lut.metric(metric);
    let freq: [f64; 4] = std::array::from_fn(|i| {
        let h = table
            .class(ComponentClass::TEXTURED[i])
            .expect("textured class");
        h.counts[bin_index(value, table.domain, h.bin_count)] as f64
    });
    let total: f64 = freq.iter().sum();
    if total <= 0.0 {
        RelativeFrequencies {
            values: [0.25; 4],
            degenerate: true,
        }
    } else {
        RelativeFrequencies {
            values: freq.map(|f| f / total),
            degenerate: false,
        }
    }
}

/// Rebalances relative frequencies against training-set class imbalance:
/// `score_c = solar_count * rel_c / count_c`, where the counts are the
/// calibration object counts (solar being the most numerous class in the
/// reference set makes its score the identity). White radiator and unknown
/// carry no texture evidence and score 0.
pub fn texture_score(rel: &RelativeFrequencies, lut: &TextureLut) -> ClassScoreVector {
    let solar_count = lut
        .variance
        .solar
        .object_count
        .max(lut.entropy.solar.object_count) as f64;
    ClassScoreVector::from_fn(|c| match lut.variance.class(c) {
        Some(h) => solar_count * rel.get(c) / h.object_count as f64,
        None => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray_from(values: &[u8], w: u32, h: u32) -> ImageBuffer {
        ImageBuffer::from_raw(w, h, ColorSpace::Grayscale, values.to_vec()).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        // Constant crop: single histogram bin, zero entropy.
        let img = gray_from(&[77; 64], 8, 8);
        assert_eq!(entropy(&img).unwrap(), 0.0);

        // Two equally likely intensities: exactly one bit -> 1000.
        let mut v = vec![0u8; 32];
        v.extend(vec![255u8; 32]);
        assert_eq!(entropy(&gray_from(&v, 8, 8)).unwrap(), 1000.0);

        // All 256 intensities once: eight bits -> 8000.
        let v: Vec<u8> = (0..=255).collect();
        assert_eq!(entropy(&gray_from(&v, 16, 16)).unwrap(), 8000.0);
    }

    #[test]
    fn variance_reference_values() {
        let img = gray_from(&[0, 0, 255, 255], 2, 2);
        assert_eq!(variance(&img).unwrap(), 16256.25);
        assert_eq!(variance(&gray_from(&[42], 1, 1)).unwrap(), 0.0);
        assert_eq!(variance(&gray_from(&[10, 20], 2, 1)).unwrap(), 25.0);
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [0.0, 1000.0, 2000.0, 3000.0];
        assert_eq!(quantile_sorted(&v, 0.25), 750.0);
        assert_eq!(quantile_sorted(&v, 0.75), 2250.0);
        assert_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_eq!(quantile_sorted(&v, 1.0), 3000.0);
        assert_eq!(quantile_sorted(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn bin_count_rules() {
        // Linear ramp of 320 values with IQR 1500:
        // round(2 * 1500 / cbrt(320)) = round(438.60...) = 439.
        let vals: Vec<f64> = (0..320).map(|i| i as f64 * (3000.0 / 319.0)).collect();
        assert_eq!(bin_count_for(&vals, BinRule::Count, VARIANCE_DOMAIN), 439);
        // Same data under the width reading: ceil(10000 / 9.404...) = 1064.
        let stat = 2.0 * 1500.0 / 320f64.cbrt();
        assert_eq!(
            bin_count_for(&vals, BinRule::Width, VARIANCE_DOMAIN),
            (VARIANCE_DOMAIN / stat).ceil() as usize
        );
        // Four-point case: IQR 1500, cbrt(4) -> round(1889.88) = 1890.
        let vals = [0.0, 1000.0, 2000.0, 3000.0];
        assert_eq!(bin_count_for(&vals, BinRule::Count, VARIANCE_DOMAIN), 1890);
        // Degenerate spreads floor at one bin.
        assert_eq!(bin_count_for(&[5.0; 10], BinRule::Count, 8000.0), 1);
        assert_eq!(bin_count_for(&[5.0; 10], BinRule::Width, 8000.0), 1);
    }

    #[test]
    fn bin_index_edges() {
        assert_eq!(bin_index(0.0, 8000.0, 8), 0);
        assert_eq!(bin_index(999.999, 8000.0, 8), 0);
        assert_eq!(bin_index(1000.0, 8000.0, 8), 1);
        assert_eq!(bin_index(8000.0, 8000.0, 8), 7);
        assert_eq!(bin_index(-5.0, 8000.0, 8), 0);
        assert_eq!(bin_index(99999.0, 8000.0, 8), 7);
    }

    /// A table where each class occupies its own bin of an 4-bin histogram.
    fn toy_lut() -> TextureLut {
        let hist = |bin: usize, object_count: u32| {
            let mut counts = vec![0u32; 4];
            counts[bin] = object_count;
            ClassHistogram {
                bin_count: 4,
                counts,
                object_count,
            }
        };
        TextureLut {
            format: LUT_FORMAT_TAG.into(),
            variance: MetricTable {
                domain: VARIANCE_DOMAIN,
                antenna: hist(0, 741),
                body: hist(1, 966),
                solar: hist(2, 1692),
                thruster: hist(3, 320),
            },
            entropy: MetricTable {
                domain: ENTROPY_DOMAIN,
                antenna: hist(0, 741),
                body: hist(1, 966),
                solar: hist(2, 1692),
                thruster: hist(3, 320),
            },
        }
    }

    #[test]
    fn relative_frequency_and_degenerate_flag() {
        let lut = toy_lut();
        // Value in solar's exclusive bin (bin 2 of [0, 10000] = [5000, 7500)).
        let rel = texture_relative_frequency(&lut, TextureMetric::Variance, 6000.0);
        assert!(!rel.degenerate);
        assert_eq!(rel.values, [0.0, 0.0, 1.0, 0.0]);

        // A table with an empty bin everywhere -> degenerate uniform.
        let mut lut2 = lut.clone();
        for c in [
            &mut lut2.variance.antenna,
            &mut lut2.variance.body,
            &mut lut2.variance.solar,
            &mut lut2.variance.thruster,
        ] {
            c.counts[1] = 0;
        }
        let rel = texture_relative_frequency(&lut2, TextureMetric::Variance, 3000.0);
        assert!(rel.degenerate);
        assert_eq!(rel.values, [0.25; 4]);
    }

    #[test]
    fn score_rebalances_class_imbalance() {
        use ComponentClass::*;
        let lut = toy_lut();
        let rel = RelativeFrequencies {
            values: [0.3, 0.4, 0.2, 0.1],
            degenerate: false,
        };
        let s = texture_score(&rel, &lut);
        assert!((s.get(Antenna) - 1692.0 * 0.3 / 741.0).abs() < 1e-12);
        assert!((s.get(Body) - 1692.0 * 0.4 / 966.0).abs() < 1e-12);
        assert!((s.get(Solar) - 0.2).abs() < 1e-12);
        assert!((s.get(Thruster) - 1692.0 * 0.1 / 320.0).abs() < 1e-12);
        assert_eq!(s.get(WhiteRadiator), 0.0);
        assert_eq!(s.get(Unknown), 0.0);
        // Spot values against hand-computed decimals.
        assert!((s.get(Antenna) - 0.6850202429149798).abs() < 1e-12);
        assert!((s.get(Thruster) - 0.52875).abs() < 1e-12);
    }

    #[test]
    fn calibrate_then_query_round_trips() {
        // Give each class a characteristic variance level by alternating two
        // intensities at a class-specific distance.
        let crop_with_spread = |d: u8| {
            let mut v = vec![128u8 - d / 2; 32];
            v.extend(vec![128u8 + d / 2; 32]);
            gray_from(&v, 8, 8)
        };
        let mut samples = Vec::new();
        let spreads = [(ComponentClass::Antenna, 8), (ComponentClass::Body, 60),
                       (ComponentClass::Solar, 120), (ComponentClass::Thruster, 200)];
        for (class, d) in spreads {
            for k in 0..10u8 {
                samples.push((crop_with_spread(d + (k % 3)), class));
            }
        }
        let lut = calibrate_texture_lut(&samples, BinRule::Count).unwrap();
        lut.validate().unwrap();

        // Each calibration crop's own variance must map back to a bin where
        // its class holds mass.
        for (crop, class) in &samples {
            let v = variance(crop).unwrap().clamp(0.0, VARIANCE_DOMAIN);
            let rel = texture_relative_frequency(&lut, TextureMetric::Variance, v);
            assert!(
                rel.get(*class) > 0.0,
                "{class} sample lost its own bin (var {v})"
            );
        }

        // Missing class -> calibration error.
        let partial: Vec<_> = samples
            .iter()
            .filter(|(_, c)| *c != ComponentClass::Thruster)
            .cloned()
            .collect();
        assert!(matches!(
            calibrate_texture_lut(&partial, BinRule::Count),
            Err(Error::EmptyCalibrationClass(ComponentClass::Thruster))
        ));
    }

    #[test]
    fn lut_json_round_trip_and_format_gate() {
        let dir = tempfile::tempdir().unwrap();
        let lut = toy_lut();
        let p = dir.path().join("lut.json");
        lut.save_json(&p).unwrap();
        assert_eq!(TextureLut::load_json(&p).unwrap(), lut);

        let mut bad = lut.clone();
        bad.format = "texture-lut-v0".into();
        let p2 = dir.path().join("bad.json");
        bad.save_json(&p2).unwrap();
        assert!(matches!(
            TextureLut::load_json(&p2),
            Err(Error::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn entropy_stays_in_domain(vals in prop::collection::vec(0u8.., 1..200)) {
            let img = gray_from(&vals, vals.len() as u32, 1);
            let e = entropy(&img).unwrap();
            prop_assert!((0.0..=ENTROPY_DOMAIN).contains(&e));
        }

        #[test]
        fn variance_non_negative(vals in prop::collection::vec(0u8.., 1..200)) {
            let img = gray_from(&vals, vals.len() as u32, 1);
            prop_assert!(variance(&img).unwrap() >= 0.0);
        }

        #[test]
        fn relative_frequencies_always_partition(value in -100.0f64..12000.0) {
            let lut = toy_lut();
            let rel = texture_relative_frequency(&lut, TextureMetric::Variance, value);
            let sum: f64 = rel.values.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(rel.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn bin_index_in_range(value in -1e6f64..1e6, bins in 1usize..2000) {
            prop_assert!(bin_index(value, VARIANCE_DOMAIN, bins) < bins);
        }
    }
}
