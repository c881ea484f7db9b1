//! Border following and contour geometry on binary masks.
//!
//! [`find_contours`] implements the classic two-pass-free border-following
//! scheme: a raster scan assigns each border a sequential number, traces it
//! pixel by pixel through its 8-neighborhood, and derives the nesting
//! hierarchy (outer borders vs. hole borders, each with a parent) from the
//! number of the most recently crossed border on the scan row. On top of the
//! raw chains live the usual descriptors: shoelace area, chain perimeter,
//! circularity, and iterative endpoint-fit polygon simplification.

use crate::domain::{BoundingBox, Mask};

/// A traced border: the pixel chain in trace order, whether it bounds a hole,
/// and the index of the enclosing contour (if any) in the returned list.
#[derive(Debug, Clone)]
pub struct Contour {
    /// Border pixels as `(x, y)`. Pixels can repeat where the region is one
    /// pixel wide (the trace passes them once per side).
    pub points: Vec<(i32, i32)>,
    pub is_hole: bool,
    pub parent: Option<usize>,
}

// 8-neighborhood as (row, col) offsets, clockwise starting west
// (image coordinates, row grows downward).
const CLOCKWISE: [(i32, i32); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn dir_index(dr: i32, dc: i32) -> usize {
    CLOCKWISE
        .iter()
        .position(|&(r, c)| (r, c) == (dr, dc))
        .expect("offset is an 8-neighbor")
}

struct Grid {
    w: i32,
    h: i32,
    f: Vec<i32>,
}

impl Grid {
    fn get(&self, r: i32, c: i32) -> i32 {
        if r < 0 || c < 0 || r >= self.h || c >= self.w {
            0
        } else {
            self.f[(r * self.w + c) as usize]
        }
    }

    fn set(&mut self, r: i32, c: i32, v: i32) {
        self.f[(r * self.w + c) as usize] = v;
    }
}

/// Finds every border in `mask` with its hole/outer type and parent. Border
/// numbering starts at the picture frame, so top-level outer borders have no
/// parent; a hole's parent is its surrounding outer border and vice versa.
pub fn find_contours(mask: &Mask) -> Vec<Contour> {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let mut grid = Grid {
        w,
        h,
        f: (0..h * w)
            .map(|i| mask.get((i % w) as u32, (i / w) as u32) as i32)
            .collect(),
    };

    let mut contours: Vec<Contour> = Vec::new();
    // Border bookkeeping by sequential number; entry 0 unused, entry 1 is the
    // picture frame (a hole border with no parent, not part of the output).
    let mut by_nbd: Vec<(Option<usize>, bool)> = vec![(None, true), (None, true)];
    let mut nbd: i32 = 1;

    for i in 0..h {
        let mut lnbd: i32 = 1;
        for j in 0..w {
            let fij = grid.get(i, j);
            if fij == 0 {
                continue;
            }

            let start = if fij == 1 && grid.get(i, j - 1) == 0 {
                Some(((i, j - 1), false))
            } else if fij >= 1 && grid.get(i, j + 1) == 0 {
                if fij > 1 {
                    lnbd = fij;
                }
                Some(((i, j + 1), true))
            } else {
                None
            };

            if let Some((from, is_hole)) = start {
                nbd += 1;
                let (parent_of_last, last_is_hole) = by_nbd[lnbd as usize];
                let last_idx = if lnbd >= 2 {
                    Some(lnbd as usize - 2)
                } else {
                    None
                };
                // Nesting rule: an outer border hangs off a hole border
                // directly but shares its parent with a sibling outer border,
                // and symmetrically for holes.
                let parent = if is_hole == last_is_hole {
                    parent_of_last
                } else {
                    last_idx
                };

                let points = trace_border(&mut grid, (i, j), from, nbd);
                by_nbd.push((parent, is_hole));
                contours.push(Contour {
                    points,
                    is_hole,
                    parent,
                });
            }

            let fij = grid.get(i, j);
            if fij != 1 {
                lnbd = fij.abs();
            }
        }
    }
    contours
}

/// Traces one border starting at `start`, marking pixels with `+/-nbd`, and
/// returns the visited chain as `(x, y)` points.
fn trace_border(
    grid: &mut Grid,
    start: (i32, i32),
    from: (i32, i32),
    nbd: i32,
) -> Vec<(i32, i32)> {
    let (i, j) = start;

    // Clockwise sweep around the start pixel for any neighbor to walk to.
    let first_dir = dir_index(from.0 - i, from.1 - j);
    let mut first = None;
    for k in 0..8 {
        let (dr, dc) = CLOCKWISE[(first_dir + k) % 8];
        if grid.get(i + dr, j + dc) != 0 {
            first = Some((i + dr, j + dc));
            break;
        }
    }
    let Some(p1) = first else {
        // Isolated pixel: a border of one.
        grid.set(i, j, -nbd);
        return vec![(j, i)];
    };

    let mut points = Vec::new();
    let mut p2 = p1;
    let mut p3 = (i, j);
    loop {
        // Counterclockwise sweep around p3 starting just past p2; note
        // whether the east neighbor was examined while it was zero.
        let start_dir = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        let mut east_seen_zero = false;
        let mut p4 = None;
        for k in 1..=8 {
            let (dr, dc) = CLOCKWISE[(start_dir + 8 - k) % 8];
            let cand = (p3.0 + dr, p3.1 + dc);
            if grid.get(cand.0, cand.1) != 0 {
                p4 = Some(cand);
                break;
            }
            if (dr, dc) == (0, 1) {
                east_seen_zero = true;
            }
        }
        let p4 = p4.expect("trace came from a nonzero neighbor");

        if east_seen_zero {
            grid.set(p3.0, p3.1, -nbd);
        } else if grid.get(p3.0, p3.1) == 1 {
            grid.set(p3.0, p3.1, nbd);
        }
        points.push((p3.1, p3.0));

        if p4 == (i, j) && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}

/// Shoelace area of the closed chain (absolute value).
pub fn contour_area(points: &[(i32, i32)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut acc: i64 = 0;
    for k in 0..points.len() {
        let (x0, y0) = points[k];
        let (x1, y1) = points[(k + 1) % points.len()];
        acc += x0 as i64 * y1 as i64 - x1 as i64 * y0 as i64;
    }
    (acc.abs() as f64) / 2.0
}

/// Euclidean length of the closed chain (diagonal steps count sqrt(2)).
pub fn contour_perimeter(points: &[(i32, i32)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..points.len() {
        let (x0, y0) = points[k];
        let (x1, y1) = points[(k + 1) % points.len()];
        acc += (((x1 - x0) as f64).powi(2) + ((y1 - y0) as f64).powi(2)).sqrt();
    }
    acc
}

/// `4*pi*A / P^2`: 1 for an ideal disc, ~0.785 for squares, lower for
/// elongated or concave outlines. Zero-perimeter chains score 0.
pub fn circularity(points: &[(i32, i32)]) -> f64 {
    let p = contour_perimeter(points);
    if p <= 0.0 {
        return 0.0;
    }
    4.0 * std::f64::consts::PI * contour_area(points) / (p * p)
}

/// Tight pixel bounds of the chain as a half-open box.
pub fn bounding_box(points: &[(i32, i32)]) -> BoundingBox {
    assert!(!points.is_empty(), "empty contour has no bounds");
    let (mut x0, mut y0) = points[0];
    let (mut x1, mut y1) = points[0];
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    BoundingBox::new(
        x0.max(0) as u32,
        y0.max(0) as u32,
        (x1 + 1).max(1) as u32,
        (y1 + 1).max(1) as u32,
    )
    .expect("max+1 exceeds min")
}

fn point_segment_distance(p: (i32, i32), a: (i32, i32), b: (i32, i32)) -> f64 {
    let (px, py) = (p.0 as f64, p.1 as f64);
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (bx, by) = (b.0 as f64, b.1 as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return ((px - ax).powi(2) + (py - ay).powi(2)).sqrt();
    }
    ((dx * (py - ay) - dy * (px - ax)).abs()) / len
}

fn rdp_open(points: &[(i32, i32)], epsilon: f64, out: &mut Vec<(i32, i32)>) {
    let (first, last) = (points[0], points[points.len() - 1]);
    let mut far_idx = 0;
    let mut far_dist = 0.0;
    for (k, &p) in points.iter().enumerate().skip(1).take(points.len().saturating_sub(2)) {
        let d = point_segment_distance(p, first, last);
        if d > far_dist {
            far_dist = d;
            far_idx = k;
        }
    }
    if far_dist > epsilon {
        rdp_open(&points[..=far_idx], epsilon, out);
        out.pop(); // drop the split point, the next half re-adds it
        rdp_open(&points[far_idx..], epsilon, out);
    } else {
        out.push(first);
        out.push(last);
    }
}

/// Simplifies a closed chain to its dominant vertices: splits the loop at the
/// point farthest from the chain start, simplifies both halves with tolerance
/// `epsilon`, and stitches the halves back together.
pub fn approx_polygon(points: &[(i32, i32)], epsilon: f64) -> Vec<(i32, i32)> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let anchor = points[0];
    let (mut far_idx, mut far_dist) = (0usize, 0.0f64);
    for (k, &(x, y)) in points.iter().enumerate() {
        let d = ((x - anchor.0) as f64).powi(2) + ((y - anchor.1) as f64).powi(2);
        if d > far_dist {
            far_dist = d;
            far_idx = k;
        }
    }
    if far_dist == 0.0 {
        return vec![anchor];
    }

    let mut half1 = Vec::new();
    rdp_open(&points[..=far_idx], epsilon, &mut half1);
    let mut wrapped: Vec<(i32, i32)> = points[far_idx..].to_vec();
    wrapped.push(anchor);
    let mut half2 = Vec::new();
    rdp_open(&wrapped, epsilon, &mut half2);

    // half1 ends where half2 starts, and half2 ends at the anchor that
    // half1 starts with: keep each vertex once.
    half1.extend_from_slice(&half2[1..half2.len() - 1]);
    half1
}

/// Interior angle at vertex `b` of the polygon corner `a-b-c`, in degrees.
pub fn corner_angle_deg(a: (i32, i32), b: (i32, i32), c: (i32, i32)) -> f64 {
    let v1 = ((a.0 - b.0) as f64, (a.1 - b.1) as f64);
    let v2 = ((c.0 - b.0) as f64, (c.1 - b.1) as f64);
    let n1 = (v1.0 * v1.0 + v1.1 * v1.1).sqrt();
    let n2 = (v2.0 * v2.0 + v2.1 * v2.1).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    let cos = ((v1.0 * v2.0 + v1.1 * v2.1) / (n1 * n2)).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let mut m = Mask::new(w, h);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                if ch == '#' {
                    m.set(x as u32, y as u32, true);
                }
            }
        }
        m
    }

    fn fill_disc(m: &mut Mask, cx: f64, cy: f64, r: f64) {
        for y in 0..m.height() {
            for x in 0..m.width() {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if (dx * dx + dy * dy).sqrt() <= r {
                    m.set(x, y, true);
                }
            }
        }
    }

    #[test]
    fn filled_square_has_one_outer_border() {
        let m = mask_from(&[
            "..........",
            "..#####...",
            "..#####...",
            "..#####...",
            "..#####...",
            "..#####...",
            "..........",
        ]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 1);
        assert!(!cs[0].is_hole);
        assert_eq!(cs[0].parent, None);
        let bb = bounding_box(&cs[0].points);
        assert_eq!((bb.x_min(), bb.y_min(), bb.x_max(), bb.y_max()), (2, 1, 7, 6));
        // Shoelace area of the border chain of an s x s square is (s-1)^2.
        assert_eq!(contour_area(&cs[0].points), 16.0);
        assert_eq!(contour_perimeter(&cs[0].points), 16.0);
    }

    #[test]
    fn donut_yields_hole_with_outer_parent() {
        let m = mask_from(&[
            "........",
            ".######.",
            ".######.",
            ".##..##.",
            ".##..##.",
            ".######.",
            ".######.",
            "........",
        ]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 2);
        let outer = cs.iter().position(|c| !c.is_hole).unwrap();
        let hole = cs.iter().position(|c| c.is_hole).unwrap();
        assert_eq!(cs[outer].parent, None);
        assert_eq!(cs[hole].parent, Some(outer));
        let hb = bounding_box(&cs[hole].points);
        // The traced hole border runs on the filled pixels around the cavity.
        assert!(hb.contains(&BoundingBox::new(3, 3, 5, 5).unwrap()));
    }

    #[test]
    fn nested_regions_chain_parents() {
        // Region inside a hole inside a region.
        let m = mask_from(&[
            "............",
            ".##########.",
            ".#........#.",
            ".#..####..#.",
            ".#..####..#.",
            ".#........#.",
            ".##########.",
            "............",
        ]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 3);
        let outer = cs
            .iter()
            .position(|c| !c.is_hole && c.parent.is_none())
            .unwrap();
        let hole = cs.iter().position(|c| c.is_hole).unwrap();
        let inner = cs
            .iter()
            .position(|c| !c.is_hole && c.parent.is_some())
            .unwrap();
        assert_eq!(cs[hole].parent, Some(outer));
        assert_eq!(cs[inner].parent, Some(hole));
    }

    #[test]
    fn disjoint_regions_are_both_top_level() {
        let m = mask_from(&["##..##", "##..##"]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| !c.is_hole && c.parent.is_none()));
    }

    #[test]
    fn single_pixel_and_thin_line() {
        let m = mask_from(&["...", ".#.", "..."]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].points, vec![(1, 1)]);
        assert_eq!(contour_area(&cs[0].points), 0.0);
        assert_eq!(circularity(&cs[0].points), 0.0);

        let m = mask_from(&["......", ".####.", "......"]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 1);
        let bb = bounding_box(&cs[0].points);
        assert_eq!((bb.x_min(), bb.x_max()), (1, 5));
        // Out-and-back along a 4-pixel line.
        assert_eq!(contour_perimeter(&cs[0].points), 6.0);
    }

    #[test]
    fn touching_frame_edges_still_traces() {
        let m = mask_from(&["###", "###", "###"]);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 1);
        assert!(!cs[0].is_hole);
        let bb = bounding_box(&cs[0].points);
        assert_eq!((bb.x_min(), bb.y_min(), bb.x_max(), bb.y_max()), (0, 0, 3, 3));
    }

    #[test]
    fn circularity_separates_discs_from_polygons() {
        let mut m = Mask::new(80, 80);
        fill_disc(&mut m, 40.0, 40.0, 30.0);
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 1);
        let circ = circularity(&cs[0].points);
        assert!(circ > 0.85, "disc circularity {circ}");

        let mut sq = Mask::new(60, 60);
        for y in 10..50 {
            for x in 10..50 {
                sq.set(x, y, true);
            }
        }
        let cs = find_contours(&sq);
        let circ = circularity(&cs[0].points);
        assert!((circ - std::f64::consts::FRAC_PI_4).abs() < 0.05, "square {circ}");
    }

    #[test]
    fn approx_polygon_recovers_square_corners() {
        let mut m = Mask::new(60, 60);
        for y in 10..50 {
            for x in 10..50 {
                m.set(x, y, true);
            }
        }
        let cs = find_contours(&m);
        let poly = approx_polygon(&cs[0].points, 0.02 * contour_perimeter(&cs[0].points));
        assert_eq!(poly.len(), 4, "poly {poly:?}");
        for &(x, y) in &poly {
            assert!((x == 10 || x == 49) && (y == 10 || y == 49), "corner ({x},{y})");
        }
        for k in 0..4 {
            let ang = corner_angle_deg(
                poly[(k + 3) % 4],
                poly[k],
                poly[(k + 1) % 4],
            );
            assert!((ang - 90.0).abs() < 1.0);
        }
    }

    #[test]
    fn approx_polygon_keeps_triangle_vertices() {
        // Right triangle rasterized coarsely.
        let mut m = Mask::new(60, 60);
        for y in 10..50 {
            for x in 10..(10 + (y - 9)) {
                m.set(x, y, true);
            }
        }
        let cs = find_contours(&m);
        let poly = approx_polygon(&cs[0].points, 0.03 * contour_perimeter(&cs[0].points));
        assert_eq!(poly.len(), 3, "poly {poly:?}");
    }

    #[test]
    fn disc_survives_polygon_simplification_with_many_vertices() {
        let mut m = Mask::new(100, 100);
        fill_disc(&mut m, 50.0, 50.0, 35.0);
        let cs = find_contours(&m);
        let poly = approx_polygon(&cs[0].points, 0.02 * contour_perimeter(&cs[0].points));
        assert!(poly.len() > 6, "disc reduced to {} vertices", poly.len());
    }
}
