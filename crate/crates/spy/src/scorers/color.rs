//! HSV color-band composition and the color score.
//!
//! Six semantic bands cover the palette spacecraft present on camera: blue
//! (panel glass), white (radiators), silver and two gray levels (metallic
//! structure at decreasing brightness), and black (shadow / space). A pixel
//! belongs to the first band that contains it, in that order, so overlapping
//! ranges resolve deterministically.

use serde::{Deserialize, Serialize};

use crate::domain::{ClassScoreVector, ComponentClass};
use crate::error::{Error, Result};
use crate::raster::{ColorSpace, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticColor {
    Blue,
    White,
    Silver,
    Gray1,
    Gray2,
    Black,
}

impl SemanticColor {
    /// Match precedence order.
    pub const ALL: [SemanticColor; 6] = [
        SemanticColor::Blue,
        SemanticColor::White,
        SemanticColor::Silver,
        SemanticColor::Gray1,
        SemanticColor::Gray2,
        SemanticColor::Black,
    ];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn name(&self) -> &'static str {
        match self {
            SemanticColor::Blue => "blue",
            SemanticColor::White => "white",
            SemanticColor::Silver => "silver",
            SemanticColor::Gray1 => "gray1",
            SemanticColor::Gray2 => "gray2",
            SemanticColor::Black => "black",
        }
    }
}

impl std::fmt::Display for SemanticColor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive HSV band. A hue pair with `min > max` wraps around 255 -> 0
/// (useful for reds); saturation and value must be ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsvRange {
    pub h: (u8, u8),
    pub s: (u8, u8),
    pub v: (u8, u8),
}

impl HsvRange {
    pub fn contains(&self, h: u8, s: u8, v: u8) -> bool {
        let hue_ok = if self.h.0 <= self.h.1 {
            h >= self.h.0 && h <= self.h.1
        } else {
            h >= self.h.0 || h <= self.h.1
        };
        hue_ok && s >= self.s.0 && s <= self.s.1 && v >= self.v.0 && v <= self.v.1
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.s.0 > self.s.1 || self.v.0 > self.v.1 {
            return Err(Error::InvalidConfig(format!(
                "colors.{name}: s and v ranges must satisfy min <= max"
            )));
        }
        Ok(())
    }
}

/// The six calibrated bands. Defaults assume the hue scale where 0-255 spans
/// 0-360 degrees (pure blue at ~170).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorRangeConfig {
    pub blue: HsvRange,
    pub white: HsvRange,
    pub silver: HsvRange,
    pub gray1: HsvRange,
    pub gray2: HsvRange,
    pub black: HsvRange,
}

impl Default for ColorRangeConfig {
    fn default() -> Self {
        let full_h = (0, 255);
        ColorRangeConfig {
            blue: HsvRange {
                h: (140, 180),
                s: (80, 255),
                v: (40, 255),
            },
            white: HsvRange {
                h: full_h,
                s: (0, 30),
                v: (200, 255),
            },
            silver: HsvRange {
                h: full_h,
                s: (0, 30),
                v: (140, 200),
            },
            gray1: HsvRange {
                h: full_h,
                s: (0, 40),
                v: (90, 140),
            },
            gray2: HsvRange {
                h: full_h,
                s: (0, 40),
                v: (50, 90),
            },
            black: HsvRange {
                h: full_h,
                s: (0, 255),
                v: (0, 49),
            },
        }
    }
}

impl ColorRangeConfig {
    pub fn range(&self, color: SemanticColor) -> &HsvRange {
        match color {
            SemanticColor::Blue => &self.blue,
            SemanticColor::White => &self.white,
            SemanticColor::Silver => &self.silver,
            SemanticColor::Gray1 => &self.gray1,
            SemanticColor::Gray2 => &self.gray2,
            SemanticColor::Black => &self.black,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in SemanticColor::ALL {
            self.range(c).validate(c.name())?;
        }
        Ok(())
    }

    /// First band containing the pixel, in precedence order.
    pub fn classify_pixel(&self, h: u8, s: u8, v: u8) -> Option<SemanticColor> {
        SemanticColor::ALL
            .into_iter()
            .find(|&c| self.range(c).contains(h, s, v))
    }
}

/// Fraction of crop pixels falling in each band; `unmatched` takes the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorPercentages {
    fractions: [f64; 6],
    pub unmatched: f64,
}

impl ColorPercentages {
    pub fn from_fractions(fractions: [f64; 6], unmatched: f64) -> ColorPercentages {
        ColorPercentages {
            fractions,
            unmatched,
        }
    }

    pub fn get(&self, color: SemanticColor) -> f64 {
        self.fractions[color.index()]
    }

    /// Band with the largest fraction; `None` when no pixel matched any band.
    /// Ties resolve to the earlier band in precedence order.
    pub fn dominant(&self) -> Option<SemanticColor> {
        let mut best: Option<(SemanticColor, f64)> = None;
        for c in SemanticColor::ALL {
            let f = self.get(c);
            if f > 0.0 && best.map_or(true, |(_, bf)| f > bf) {
                best = Some((c, f));
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Classifies every pixel of `crop` into the color bands. Non-HSV inputs are
/// converted first (grayscale via channel replication, so grays stay gray).
pub fn color_percentages(
    crop: &ImageBuffer,
    ranges: &ColorRangeConfig,
) -> Result<ColorPercentages> {
    ranges.validate()?;
    if crop.pixel_count() == 0 {
        return Err(Error::EmptyCrop);
    }
    let hsv = match crop.color_space() {
        ColorSpace::Hsv => crop.clone(),
        ColorSpace::Grayscale => crop.gray_to_rgb()?.convert(ColorSpace::Hsv)?,
        _ => crop.convert(ColorSpace::Hsv)?,
    };
    let mut counts = [0u64; 6];
    let mut unmatched = 0u64;
    for px in hsv.data().chunks_exact(3) {
        match ranges.classify_pixel(px[0], px[1], px[2]) {
            Some(c) => counts[c.index()] += 1,
            None => unmatched += 1,
        }
    }
    let n = hsv.pixel_count() as f64;
    Ok(ColorPercentages {
        fractions: counts.map(|c| c as f64 / n),
        unmatched: unmatched as f64 / n,
    })
}

/// Color evidence per component class. Metallic components average their
/// plausible bands (antennas bright metal, bodies any metal, thrusters the
/// darker metal), panels read blue, radiators white, unknown black. With
/// `radiator_merge` set, a mostly-white crop moves the radiator score onto
/// solar — used when the label set folds radiators into panels.
pub fn color_score(p: &ColorPercentages, radiator_merge: bool) -> ClassScoreVector {
    use SemanticColor::*;
    let mut v = ClassScoreVector::zero();
    v.set(ComponentClass::Antenna, (p.get(Silver) + p.get(Gray1)) / 2.0);
    v.set(
        ComponentClass::Body,
        (p.get(Silver) + p.get(Gray1) + p.get(Gray2)) / 3.0,
    );
    v.set(ComponentClass::Solar, p.get(Blue));
    v.set(
        ComponentClass::Thruster,
        (p.get(Silver) + p.get(Gray2)) / 2.0,
    );
    v.set(ComponentClass::WhiteRadiator, p.get(White));
    v.set(ComponentClass::Unknown, p.get(Black));
    if radiator_merge && p.get(White) > 0.5 {
        let wr = v.get(ComponentClass::WhiteRadiator);
        v.set(ComponentClass::Solar, v.get(ComponentClass::Solar) + wr);
        v.set(ComponentClass::WhiteRadiator, 0.0);
    }
    v
}
