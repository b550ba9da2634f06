//! Marching squares over binary masks.
//!
//! Pixel centers are the sample points and every boundary vertex sits at the
//! midpoint of a cell edge (no interpolation). The mask is padded with
//! background so every boundary closes. Saddle cells keep diagonal
//! foreground pixels apart (4-connected foreground).
//!
//! Each segment is oriented with foreground on its left, so outer
//! boundaries come out counterclockwise in `(x, y)` coordinates (positive
//! signed shoelace area) and holes clockwise.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::raster::RasterImage;

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polygon {
    /// Shoelace area; positive for counterclockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        let edges = if self.closed { n } else { n.saturating_sub(1) };
        (0..edges)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                (x1 - x0).hypot(y1 - y0)
            })
            .sum()
    }
}

// Vertices live on a doubled integer lattice so they can be hashed exactly.
type Point2 = (i64, i64);

#[derive(Clone, Copy)]
enum Edge {
    Top,
    Right,
    Bottom,
    Left,
}

/// Extracts one closed polygon per boundary of the foreground (`> 0.5`).
pub fn extract_contour(mask: &RasterImage) -> Result<Vec<Polygon>> {
    if mask.channels() != 1 {
        return Err(Error::validation("contour masks must be single-channel"));
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let fg = |x: i64, y: i64| -> bool {
        x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize, 0) > 0.5
    };

    // (start, end) in row-major cell order
    let mut segments: Vec<(Point2, Point2)> = Vec::new();
    for cy in -1..h {
        for cx in -1..w {
            let tl = fg(cx, cy);
            let tr = fg(cx + 1, cy);
            let br = fg(cx + 1, cy + 1);
            let bl = fg(cx, cy + 1);
            let case = (tl as u8) << 3 | (tr as u8) << 2 | (br as u8) << 1 | bl as u8;
            let corner = |dx: i64, dy: i64| (2 * (cx + dx), 2 * (cy + dy));
            let mid = |e: Edge| match e {
                Edge::Top => (2 * cx + 1, 2 * cy),
                Edge::Right => (2 * cx + 2, 2 * cy + 1),
                Edge::Bottom => (2 * cx + 1, 2 * cy + 2),
                Edge::Left => (2 * cx, 2 * cy + 1),
            };
            // (edge pair, a foreground corner on the enclosed side)
            let pairs: &[(Edge, Edge, (i64, i64))] = match case {
                0 | 15 => &[],
                1 | 14 => &[(Edge::Left, Edge::Bottom, if bl { (0, 1) } else { (0, 0) })],
                2 | 13 => &[(Edge::Bottom, Edge::Right, if br { (1, 1) } else { (0, 0) })],
                3 | 12 => &[(Edge::Left, Edge::Right, if bl { (0, 1) } else { (0, 0) })],
                4 | 11 => &[(Edge::Top, Edge::Right, if tr { (1, 0) } else { (0, 0) })],
                6 | 9 => &[(Edge::Top, Edge::Bottom, if tr { (1, 0) } else { (0, 0) })],
                7 | 8 => &[(Edge::Top, Edge::Left, if tl { (0, 0) } else { (1, 0) })],
                5 => &[
                    (Edge::Top, Edge::Right, (1, 0)),
                    (Edge::Bottom, Edge::Left, (0, 1)),
                ],
                10 => &[
                    (Edge::Top, Edge::Left, (0, 0)),
                    (Edge::Right, Edge::Bottom, (1, 1)),
                ],
                _ => unreachable!(),
            };
            for &(e0, e1, (fx, fy)) in pairs {
                let (a, b) = (mid(e0), mid(e1));
                let p = corner(fx, fy);
                let turn = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                segments.push(if turn > 0 { (a, b) } else { (b, a) });
            }
        }
    }

    let by_start: HashMap<Point2, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, &(s, _))| (s, i))
        .collect();
    let mut used = vec![false; segments.len()];
    let mut polygons = Vec::new();
    for first in 0..segments.len() {
        if used[first] {
            continue;
        }
        let start = segments[first].0;
        let mut verts = vec![start];
        used[first] = true;
        let mut cur = segments[first].1;
        while cur != start {
            verts.push(cur);
            let next = by_start[&cur];
            used[next] = true;
            cur = segments[next].1;
        }
        polygons.push(Polygon {
            vertices: verts
                .into_iter()
                .map(|(x, y)| (x as f64 / 2.0, y as f64 / 2.0))
                .collect(),
            closed: true,
        });
    }
    Ok(polygons)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> RasterImage {
        let mut px = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                if on(x, y) {
                    px[y * w + x] = 1.0;
                }
            }
        }
        RasterImage::new(w, h, 1, px).unwrap()
    }

    #[test]
    fn empty_mask_has_no_contours() {
        let m = mask_from(6, 6, |_, _| false);
        assert!(extract_contour(&m).unwrap().is_empty());
    }

    #[test]
    fn single_pixel_is_a_diamond() {
        let m = mask_from(10, 10, |x, y| (x, y) == (5, 5));
        let polys = extract_contour(&m).unwrap();
        assert_eq!(polys.len(), 1);
        let p = &polys[0];
        assert!(p.closed);
        // hand-traced: first boundary cell is the one whose bottom-right corner is (5,5)
        assert_eq!(p.vertices, vec![(4.5, 5.0), (5.0, 4.5), (5.5, 5.0), (5.0, 5.5)]);
        assert!((p.signed_area() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rectangle_area_close_to_pixel_count() {
        let m = mask_from(20, 20, |x, y| (3..11).contains(&x) && (4..9).contains(&y));
        let polys = extract_contour(&m).unwrap();
        assert_eq!(polys.len(), 1);
        let area = polys[0].signed_area();
        assert!((area - 40.0).abs() <= polys[0].perimeter() / 2.0);
        assert!((area - 39.5).abs() < 1e-12);
    }

    #[test]
    fn edge_touching_foreground_closes() {
        let m = mask_from(4, 4, |_, _| true);
        let polys = extract_contour(&m).unwrap();
        assert_eq!(polys.len(), 1);
        assert!((polys[0].signed_area() - 15.5).abs() < 1e-12);
    }

    #[test]
    fn hole_is_clockwise() {
        let m = mask_from(9, 9, |x, y| (1..8).contains(&x) && (1..8).contains(&y) && (x, y) != (4, 4));
        let polys = extract_contour(&m).unwrap();
        assert_eq!(polys.len(), 2);
        assert!(polys[0].signed_area() > 0.0);
        assert!(polys[1].signed_area() < 0.0);
    }

    #[test]
    fn diagonal_pixels_stay_separate() {
        let m = mask_from(6, 6, |x, y| (x, y) == (2, 2) || (x, y) == (3, 3));
        assert_eq!(extract_contour(&m).unwrap().len(), 2);
    }

    #[test]
    fn multichannel_rejected() {
        let m = RasterImage::filled(3, 3, 3, 0.0).unwrap();
        assert!(extract_contour(&m).is_err());
    }
}
