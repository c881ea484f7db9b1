//! Shape-prior scores.

use crate::domain::{ClassScoreVector, ComponentClass, ShapeClass};

/// Prior score of each component class given the detected primitive shape:
/// 2 for the shapes a component typically presents (dish antennas are
/// circular, panels and bodies rectangular, thruster nozzles triangular in
/// profile; rings fit dishes, panel cutouts, and nozzle throats), 1 for
/// everything else so that no class is ever ruled out by shape alone.
pub fn shape_score(shape: ShapeClass) -> ClassScoreVector {
    use ComponentClass::*;
    let likely: &[ComponentClass] = match shape {
        ShapeClass::Circle => &[Antenna],
        ShapeClass::Rectangle => &[Body, Solar],
        ShapeClass::Triangle => &[Thruster],
        ShapeClass::Ring => &[Antenna, Solar, Thruster],
    };
    ClassScoreVector::from_fn(|c| if likely.contains(&c) { 2.0 } else { 1.0 })
}
