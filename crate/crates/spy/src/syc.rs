//! Shape-color-texture voting and the final component decision.
//!
//! Two product votes summarize the per-class evidence for a detected box:
//!
//! * `PSV = s * (c + v + e)` — the shape prior times the *sum* of color and
//!   both texture scores (an additive, forgiving combination);
//! * `MUV = s * (v + e) * c` — the same but with color as a *factor*, so a
//!   class with no color support drops out entirely.
//!
//! Both vectors are sum-normalized and their argmax classes (`p` from PSV,
//! `m` from MUV) with normalized peak scores (`pp`, `mp`) feed a fixed
//! decision ladder: confident-unknown gates first, then blue dominance,
//! thruster, antenna (when the additive vote out-scores the multiplicative
//! one), a solar texture check, and finally the multiplicative vote as the
//! fallback.

use serde::{Deserialize, Serialize};

use crate::domain::{
    BoundingBox, ClassScoreVector, ComponentClass, Detection, ShapeClass,
};
use crate::error::{Error, Result};
use crate::raster::{ColorSpace, ImageBuffer};
use crate::scorers::{
    color_percentages, color_score, entropy, shape_score, texture_relative_frequency,
    texture_score, variance, ColorPercentages, ColorRangeConfig, SemanticColor, TextureLut,
    TextureMetric, VARIANCE_DOMAIN,
};

/// Classifier switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SycMode {
    /// Re-label final Body decisions as Unknown (for deployments where an
    /// external detector owns the body class).
    pub suppress_body: bool,
    /// Fold white-radiator color evidence into solar when a crop is mostly
    /// white (label sets without a radiator class).
    pub radiator_merge: bool,
    /// Normalized-peak threshold for the confident-unknown gates.
    pub unknown_threshold: f64,
}

impl Default for SycMode {
    fn default() -> Self {
        SycMode {
            suppress_body: false,
            radiator_merge: true,
            unknown_threshold: 0.5,
        }
    }
}

impl SycMode {
    pub fn validate(&self) -> Result<()> {
        if !self.unknown_threshold.is_finite() || !(0.0..=1.0).contains(&self.unknown_threshold) {
            return Err(Error::InvalidConfig(format!(
                "syc.unknown_threshold must be in [0, 1], got {}",
                self.unknown_threshold
            )));
        }
        Ok(())
    }
}

/// `s * (c + v + e)`, element-wise.
pub fn psv(
    s: &ClassScoreVector,
    c: &ClassScoreVector,
    v: &ClassScoreVector,
    e: &ClassScoreVector,
) -> ClassScoreVector {
    s.hadamard(&c.add(v).add(e))
}

/// `s * (v + e) * c`, element-wise.
pub fn muv(
    s: &ClassScoreVector,
    c: &ClassScoreVector,
    v: &ClassScoreVector,
    e: &ClassScoreVector,
) -> ClassScoreVector {
    s.hadamard(&v.add(e)).hadamard(c)
}

/// Both votes plus their normalized argmax summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingResult {
    pub psv: ClassScoreVector,
    pub muv: ClassScoreVector,
    pub psv_norm: ClassScoreVector,
    pub muv_norm: ClassScoreVector,
    /// PSV argmax; Unknown when the PSV sums to zero.
    pub p: ComponentClass,
    /// MUV argmax; Unknown when the MUV sums to zero.
    pub m: ComponentClass,
    /// Normalized PSV peak (0 on a zero vote).
    pub pp: f64,
    /// Normalized MUV peak (0 on a zero vote).
    pub mp: f64,
}

impl VotingResult {
    pub fn compute(
        s: &ClassScoreVector,
        c: &ClassScoreVector,
        v: &ClassScoreVector,
        e: &ClassScoreVector,
    ) -> VotingResult {
        let psv = psv(s, c, v, e);
        let muv = muv(s, c, v, e);
        let psv_norm = psv.normalized();
        let muv_norm = muv.normalized();
        let (p, pp) = if psv.sum() > 0.0 {
            (psv.argmax(), psv_norm.max())
        } else {
            (ComponentClass::Unknown, 0.0)
        };
        let (m, mp) = if muv.sum() > 0.0 {
            (muv.argmax(), muv_norm.max())
        } else {
            (ComponentClass::Unknown, 0.0)
        };
        VotingResult {
            psv,
            muv,
            psv_norm,
            muv_norm,
            p,
            m,
            pp,
            mp,
        }
    }
}

/// The decision ladder. `colors` are the crop's band fractions and
/// `variance_scores` the variance-metric texture score vector (used by the
/// solar texture check).
pub fn classify(
    vote: &VotingResult,
    colors: &ColorPercentages,
    variance_scores: &ClassScoreVector,
    mode: &SycMode,
) -> ComponentClass {
    use ComponentClass::*;
    let t = mode.unknown_threshold;
    let decided = if vote.p == Unknown && vote.pp > t {
        Unknown
    } else if vote.m == Unknown && vote.mp > t {
        Unknown
    } else if colors.dominant() == Some(SemanticColor::Blue) {
        Solar
    } else if vote.p == Thruster {
        Thruster
    } else if vote.p == Antenna && vote.pp > vote.mp {
        Antenna
    } else if variance_scores.sum() > 0.0 && variance_scores.argmax() == Solar {
        Solar
    } else {
        // Fall back to the multiplicative vote; a zero MUV already reads
        // Unknown here.
        vote.m
    };
    if mode.suppress_body && decided == Body {
        Unknown
    } else {
        decided
    }
}

/// Everything computed for one box, kept for reports and debugging.
#[derive(Debug, Clone)]
pub struct BoxScores {
    pub shape: ClassScoreVector,
    pub color: ClassScoreVector,
    pub variance_scores: ClassScoreVector,
    pub entropy_scores: ClassScoreVector,
    pub colors: ColorPercentages,
    pub variance_raw: f64,
    pub entropy_value: f64,
    pub vote: VotingResult,
    pub class: ComponentClass,
}

/// Scores boxes against a frame: crops each detection from the original
/// frame, gathers the three kinds of evidence, votes, and decides.
pub struct Classifier<'a> {
    colors: &'a ColorRangeConfig,
    lut: &'a TextureLut,
    mode: SycMode,
}

impl<'a> Classifier<'a> {
    pub fn new(
        colors: &'a ColorRangeConfig,
        lut: &'a TextureLut,
        mode: SycMode,
    ) -> Result<Classifier<'a>> {
        colors.validate()?;
        lut.validate()?;
        mode.validate()?;
        Ok(Classifier { colors, lut, mode })
    }

    pub fn mode(&self) -> &SycMode {
        &self.mode
    }

    /// Scores the crop under `bbox`. The frame may be RGB, HSV, YCbCr, or
    /// grayscale; color evidence comes from its RGB rendering.
    pub fn score_box(
        &self,
        frame: &ImageBuffer,
        bbox: &BoundingBox,
        shape: ShapeClass,
    ) -> Result<BoxScores> {
        let rgb = match frame.color_space() {
            ColorSpace::Rgb => frame.clone(),
            ColorSpace::Grayscale => frame.gray_to_rgb()?,
            _ => frame.convert(ColorSpace::Rgb)?,
        };
        let crop = rgb.crop(bbox)?;
        let gray = crop.convert(ColorSpace::Grayscale)?;

        let colors = color_percentages(&crop, self.colors)?;
        let color = color_score(&colors, self.mode.radiator_merge);

        let variance_raw = variance(&gray)?;
        let var_rel = texture_relative_frequency(
            self.lut,
            TextureMetric::Variance,
            variance_raw.clamp(0.0, VARIANCE_DOMAIN),
        );
        // A degenerate lookup means the value fell where no class has
        // calibrated mass: that is absence of evidence, not a uniform vote,
        // so the metric contributes nothing.
        let variance_scores = if var_rel.degenerate {
            ClassScoreVector::zero()
        } else {
            texture_score(&var_rel, self.lut)
        };

        let entropy_value = entropy(&gray)?;
        let ent_rel = texture_relative_frequency(self.lut, TextureMetric::Entropy, entropy_value);
        let entropy_scores = if ent_rel.degenerate {
            ClassScoreVector::zero()
        } else {
            texture_score(&ent_rel, self.lut)
        };

        let shape = shape_score(shape);
        let vote = VotingResult::compute(&shape, &color, &variance_scores, &entropy_scores);
        let class = classify(&vote, &colors, &variance_scores, &self.mode);
        Ok(BoxScores {
            shape,
            color,
            variance_scores,
            entropy_scores,
            colors,
            variance_raw,
            entropy_value,
            vote,
            class,
        })
    }

    /// Classifies a batch of shape detections against their frame, keeping
    /// box geometry and confidence.
    pub fn classify_detections(
        &self,
        frame: &ImageBuffer,
        detections: &[Detection<ShapeClass>],
    ) -> Result<Vec<Detection<ComponentClass>>> {
        detections
            .iter()
            .map(|d| {
                let scores = self.score_box(frame, &d.bbox, d.label)?;
                Ok(d.with_label(scores.class))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{
        calibrate_texture_lut, BinRule, ClassHistogram, MetricTable, ENTROPY_DOMAIN,
        LUT_FORMAT_TAG,
    };
    use rand::{Rng, SeedableRng};
    use ComponentClass::*;

    fn v6(vals: [f64; 6]) -> ClassScoreVector {
        ClassScoreVector::from_fn(|c| vals[c.index()])
    }

    fn pct(fractions: [f64; 6]) -> ColorPercentages {
        let sum: f64 = fractions.iter().sum();
        ColorPercentages::from_fractions(fractions, (1.0 - sum).max(0.0))
    }

    #[test]
    fn votes_match_hand_formulas() {
        let s = v6([2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let c = v6([0.25, 0.1, 0.0, 0.3, 0.0, 0.0]);
        let v = v6([0.6, 0.2, 0.1, 0.0, 0.0, 0.0]);
        let e = v6([0.4, 0.3, 0.0, 0.1, 0.0, 0.0]);
        let p = psv(&s, &c, &v, &e);
        let m = muv(&s, &c, &v, &e);
        for class in ComponentClass::ALL {
            let i = class.index();
            let (sv, cv, vv, ev) = (s.get(class), c.get(class), v.get(class), e.get(class));
            assert!((p.get(class) - sv * (cv + vv + ev)).abs() < 1e-15, "psv[{i}]");
            assert!((m.get(class) - sv * (vv + ev) * cv).abs() < 1e-15, "muv[{i}]");
        }
        // Spot: antenna psv = 2 * (0.25 + 0.6 + 0.4) = 2.5, muv = 2 * 1.0 * 0.25.
        assert!((p.get(Antenna) - 2.5).abs() < 1e-15);
        assert!((m.get(Antenna) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_votes_match_formulas() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rand_vec = |rng: &mut rand_chacha::ChaCha8Rng| {
                ClassScoreVector::from_fn(|_| rng.random_range(0.0..3.0))
            };
            let (s, c, v, e) = (
                rand_vec(&mut rng),
                rand_vec(&mut rng),
                rand_vec(&mut rng),
                rand_vec(&mut rng),
            );
            let vote = VotingResult::compute(&s, &c, &v, &e);
            for class in ComponentClass::ALL {
                let want_p = s.get(class) * (c.get(class) + v.get(class) + e.get(class));
                let want_m = s.get(class) * (v.get(class) + e.get(class)) * c.get(class);
                assert!((vote.psv.get(class) - want_p).abs() < 1e-12);
                assert!((vote.muv.get(class) - want_m).abs() < 1e-12);
            }
            assert!((vote.psv_norm.sum() - 1.0).abs() < 1e-12);
            assert!((vote.muv_norm.sum() - 1.0).abs() < 1e-12);
            assert_eq!(vote.p, vote.psv.argmax());
            assert!((vote.pp - vote.psv_norm.max()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_votes_read_unknown() {
        let z = ClassScoreVector::zero();
        let vote = VotingResult::compute(&z, &z, &z, &z);
        assert_eq!(vote.p, Unknown);
        assert_eq!(vote.m, Unknown);
        assert_eq!(vote.pp, 0.0);
        assert_eq!(vote.mp, 0.0);
        let c = classify(&vote, &pct([0.0; 6]), &z, &SycMode::default());
        assert_eq!(c, Unknown);
    }

    /// Drives each ladder rung with hand-built evidence.
    #[test]
    fn decision_ladder_cases() {
        let mode = SycMode::default();
        let zero = ClassScoreVector::zero();
        let no_color = pct([0.0; 6]);

        // Case 1: confident unknown on the additive vote (all-black crop:
        // only the unknown class scores).
        let s = v6([1.0; 6]);
        let c = v6([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let vote = VotingResult::compute(&s, &c, &zero, &zero);
        assert_eq!(vote.p, Unknown);
        assert!(vote.pp > 0.5);
        assert_eq!(
            classify(&vote, &pct([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), &zero, &mode),
            Unknown
        );

        // Case 2: additive vote prefers a real class but the multiplicative
        // vote is confidently unknown (synthetic texture mass on unknown).
        let c = v6([0.4, 0.0, 0.0, 0.0, 0.0, 0.6]);
        let v = v6([0.1, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let vote = VotingResult::compute(&s, &c, &v, &zero);
        assert_eq!(vote.p, Unknown); // psv: antenna 0.5 vs unknown 2.6
        let c2 = v6([3.0, 0.0, 0.0, 0.0, 0.0, 0.6]);
        let vote2 = VotingResult::compute(&s, &c2, &v, &zero);
        assert_ne!(vote2.p, Unknown);
        assert_eq!(vote2.m, Unknown);
        assert!(vote2.mp > 0.5, "mp = {}", vote2.mp);
        assert_eq!(classify(&vote2, &no_color, &zero, &mode), Unknown);

        // Case 3: dominant blue forces Solar regardless of the votes.
        let c = v6([0.0, 0.5, 0.2, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &zero, &zero);
        assert_eq!(vote.p, Body);
        let blue_heavy = pct([0.4, 0.0, 0.3, 0.2, 0.0, 0.0]);
        assert_eq!(classify(&vote, &blue_heavy, &zero, &mode), Solar);

        // Case 4: additive vote lands on thruster.
        let c = v6([0.1, 0.0, 0.0, 0.8, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &zero, &zero);
        assert_eq!(vote.p, Thruster);
        assert_eq!(classify(&vote, &no_color, &zero, &mode), Thruster);

        // Case 5: antenna wins when the additive peak beats the
        // multiplicative peak (possible when the runner-up has strong
        // texture but weaker color, flattening the product vote).
        let c = v6([0.6, 0.3, 0.0, 0.0, 0.0, 0.0]);
        let v = v6([0.2, 0.35, 0.0, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &v, &zero);
        assert_eq!(vote.p, Antenna);
        assert!(vote.pp > vote.mp, "pp {} mp {}", vote.pp, vote.mp);
        assert_eq!(classify(&vote, &no_color, &zero, &mode), Antenna);

        // ...but not when the multiplicative vote is at least as peaked.
        let c = v6([0.5, 0.40, 0.0, 0.0, 0.0, 0.0]);
        let v = v6([0.9, 0.05, 0.0, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &v, &zero);
        assert_eq!(vote.p, Antenna);
        assert!(vote.pp <= vote.mp, "pp {} mp {}", vote.pp, vote.mp);
        // Falls through to case 6/7: m is antenna here.
        assert_eq!(classify(&vote, &no_color, &zero, &mode), Antenna);

        // Case 6: solar-leaning variance texture rescues Solar from a vote
        // that would otherwise fall through (p = Body skips rungs 4 and 5).
        let c = v6([0.2, 0.5, 0.1, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &zero, &zero);
        assert_eq!(vote.p, Body);
        let v_solar = v6([0.1, 0.1, 0.9, 0.0, 0.0, 0.0]);
        assert_eq!(classify(&vote, &no_color, &v_solar, &mode), Solar);
        // Without the solar texture the same vote falls to rung 7 (m is
        // Unknown on a zero product vote).
        assert_eq!(classify(&vote, &no_color, &zero, &mode), Unknown);

        // Case 7: fallback to the multiplicative argmax.
        let c = v6([0.2, 0.6, 0.0, 0.0, 0.0, 0.0]);
        let v = v6([0.1, 0.4, 0.0, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &v, &zero);
        assert_eq!(vote.m, Body);
        assert_eq!(classify(&vote, &no_color, &zero, &mode), Body);

        // suppress_body rewrites that Body to Unknown.
        let suppress = SycMode {
            suppress_body: true,
            ..SycMode::default()
        };
        assert_eq!(classify(&vote, &no_color, &zero, &suppress), Unknown);
    }

    #[test]
    fn unknown_threshold_is_configurable() {
        let s = v6([1.0; 6]);
        // Unknown peaks at 0.6/1.1 normalized; antenna has enough texture
        // to hold the multiplicative vote.
        let c = v6([0.15, 0.15, 0.0, 0.0, 0.0, 0.6]);
        let v = v6([0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let vote = VotingResult::compute(&s, &c, &v, &ClassScoreVector::zero());
        assert_eq!(vote.p, Unknown);
        assert!((vote.pp - 0.6 / 1.1).abs() < 1e-12);
        let lax = SycMode {
            unknown_threshold: 0.7,
            ..SycMode::default()
        };
        // Past the default 0.5 gate this is Unknown; raising the gate to 0.7
        // lets it fall through to the multiplicative vote instead.
        assert_eq!(
            classify(&vote, &pct([0.0; 6]), &ClassScoreVector::zero(), &SycMode::default()),
            Unknown
        );
        let fallback = classify(&vote, &pct([0.0; 6]), &ClassScoreVector::zero(), &lax);
        assert_eq!(fallback, Antenna);

        assert!(SycMode { unknown_threshold: 1.5, ..SycMode::default() }
            .validate()
            .is_err());
    }

    /// End-to-end: calibrate a small LUT, then classify three crops.
    #[test]
    fn classifier_scores_synthetic_boxes() {
        // Pseudo-uniform texture over [base, base + spread): the per-sample
        // spread jitter keeps each class's variance and entropy IQR positive,
        // so the calibrated histograms get fine bins and the zero-texture
        // bin stays empty — exactly what real multi-tone components do.
        let textured = |base: u32, spread: u32, k: u32| {
            let mut img = ImageBuffer::new(16, 16, ColorSpace::Grayscale);
            for y in 0..16u32 {
                for x in 0..16u32 {
                    let v = base + (x * 23 + y * 31 + k * 3) % spread;
                    img.set_gray(x, y, v.min(255) as u8);
                }
            }
            img
        };
        let mut samples = Vec::new();
        for k in 0..8u32 {
            samples.push((textured(40, 80 + 4 * k, k), Antenna));
            samples.push((textured(30, 130 + 4 * k, k), Body));
            samples.push((textured(20, 190 + 4 * k, k), Solar));
            samples.push((textured(60, 100 + 4 * k, k), Thruster));
        }
        let lut = calibrate_texture_lut(&samples, BinRule::Count).unwrap();
        let ranges = ColorRangeConfig::default();
        let clf = Classifier::new(&ranges, &lut, SycMode::default()).unwrap();

        // A blue-striped rectangle crop must come out Solar (blue dominance).
        let mut frame = ImageBuffer::new(64, 64, ColorSpace::Rgb);
        frame.fill(&[5, 5, 5]);
        for y in 8..40 {
            for x in 8..56 {
                let px = if (x / 2) % 2 == 0 {
                    [40, 60, 255]
                } else {
                    [20, 30, 128]
                };
                frame.set_pixel(x, y, &px);
            }
        }
        let bbox = BoundingBox::new(8, 8, 56, 40).unwrap();
        let scores = clf
            .score_box(&frame, &bbox, ShapeClass::Rectangle)
            .unwrap();
        assert_eq!(scores.class, Solar);
        assert!(scores.colors.get(SemanticColor::Blue) > 0.4);

        // An all-black crop must be Unknown via the confident-unknown gate.
        let black_box = BoundingBox::new(48, 48, 62, 62).unwrap();
        let scores = clf.score_box(&frame, &black_box, ShapeClass::Circle).unwrap();
        assert_eq!(scores.class, Unknown);

        // classify_detections preserves order, geometry, and confidence.
        let dets = vec![
            Detection::new(bbox, ShapeClass::Rectangle, 0.9).unwrap(),
            Detection::new(black_box, ShapeClass::Circle, 0.4).unwrap(),
        ];
        let out = clf.classify_detections(&frame, &dets).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].label, Solar);
        assert_eq!(out[0].bbox, bbox);
        assert_eq!(out[0].confidence, 0.9);
        assert_eq!(out[1].label, Unknown);
    }

    /// The fail-safe the degenerate-zeroing exists for: an all-black crop is
    /// Unknown for every shape class.
    #[test]
    fn black_crop_is_unknown_for_every_shape() {
        // LUT whose bin 0 holds no mass for any class, so the black crop's
        // zero variance/entropy lands in a degenerate bin.
        let hist = |object_count: u32| {
            let mut counts = vec![0u32; 8];
            counts[4] = object_count;
            ClassHistogram {
                bin_count: 8,
                counts,
                object_count,
            }
        };
        let table = |domain: f64| MetricTable {
            domain,
            antenna: hist(741),
            body: hist(966),
            solar: hist(1692),
            thruster: hist(320),
        };
        let lut = TextureLut {
            format: LUT_FORMAT_TAG.into(),
            variance: table(VARIANCE_DOMAIN),
            entropy: table(ENTROPY_DOMAIN),
        };
        let ranges = ColorRangeConfig::default();
        let clf = Classifier::new(&ranges, &lut, SycMode::default()).unwrap();
        let mut frame = ImageBuffer::new(32, 32, ColorSpace::Rgb);
        frame.fill(&[8, 8, 8]);
        let bbox = BoundingBox::new(4, 4, 28, 28).unwrap();
        for shape in ShapeClass::ALL {
            let scores = clf.score_box(&frame, &bbox, shape).unwrap();
            assert_eq!(scores.class, Unknown, "shape {shape}");
        }
    }
}
