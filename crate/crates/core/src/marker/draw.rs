//! Hard-edged rasterization of circles, arrows and polylines.
//!
//! Pixel `(x, y)` is treated as the point `(x, y)`; a pixel is painted when
//! that point falls inside the stroke geometry.

use crate::error::{Error, Result};
use crate::marker::{MarkerSpec, Polygon};
use crate::preprocess::to_rgb;
use crate::raster::RasterImage;

const EPS: f64 = 1e-9;

fn check_placement(img: &RasterImage, center: (f64, f64), diameter: f64) -> Result<()> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return Err(Error::validation(format!(
            "nodule diameter must be positive, got {diameter}"
        )));
    }
    let inside = center.0 >= 0.0
        && center.1 >= 0.0
        && center.0 < img.width() as f64
        && center.1 < img.height() as f64;
    if !inside {
        return Err(Error::validation(format!(
            "marker center ({}, {}) outside {}x{} image",
            center.0,
            center.1,
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Inclusive pixel range covering `[lo, hi]`, clipped to `[0, len)`.
fn pixel_span(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let start = lo.ceil().max(0.0);
    let end = (hi.floor() + 1.0).min(len as f64);
    if end <= start {
        0..0
    } else {
        start as usize..end as usize
    }
}

/// Ring of radius `scale_factor × diameter / 2` around `center`.
pub fn draw_circle(
    img: &RasterImage,
    center: (f64, f64),
    nodule_diameter_px: f64,
    spec: &MarkerSpec,
) -> Result<RasterImage> {
    spec.validate()?;
    check_placement(img, center, nodule_diameter_px)?;
    let mut out = to_rgb(img)?;
    let radius = spec.scale_factor * nodule_diameter_px / 2.0;
    let half = spec.stroke_width_px as f64 / 2.0;
    let reach = radius + half;
    let (cx, cy) = center;
    for y in pixel_span(cy - reach, cy + reach, out.height()) {
        let dy = y as f64 - cy;
        for x in pixel_span(cx - reach, cx + reach, out.width()) {
            let r = (x as f64 - cx).hypot(dy);
            if (r - radius).abs() <= half + EPS {
                out.set_rgb(x, y, spec.color);
            }
        }
    }
    Ok(out)
}

/// Analytic arrow geometry: the head apex sits one diameter left of the
/// nodule and the arrow points in `+x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrowGeometry {
    pub tip: (f64, f64),
    pub head_base_x: f64,
    pub barb_upper: (f64, f64),
    pub barb_lower: (f64, f64),
    pub shaft_end: (f64, f64),
}

impl ArrowGeometry {
    pub fn new(center: (f64, f64), nodule_diameter_px: f64, spec: &MarkerSpec) -> Self {
        let d = nodule_diameter_px;
        let p = spec.arrow;
        let tip = (center.0 - d, center.1);
        let head_base_x = tip.0 - p.head_length * d;
        let half_width = p.head_half_width * d;
        Self {
            tip,
            head_base_x,
            barb_upper: (head_base_x, tip.1 - half_width),
            barb_lower: (head_base_x, tip.1 + half_width),
            shaft_end: (tip.0 - p.shaft_length * d, tip.1),
        }
    }

    fn in_head(&self, x: f64, y: f64) -> bool {
        let (a, b, c) = (self.tip, self.barb_upper, self.barb_lower);
        let s1 = cross(a, b, (x, y));
        let s2 = cross(b, c, (x, y));
        let s3 = cross(c, a, (x, y));
        (s1 >= -EPS && s2 >= -EPS && s3 >= -EPS) || (s1 <= EPS && s2 <= EPS && s3 <= EPS)
    }
}

fn cross(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Rightward arrow: filled triangular head plus a shaft of stroke width.
pub fn draw_arrow(
    img: &RasterImage,
    center: (f64, f64),
    nodule_diameter_px: f64,
    spec: &MarkerSpec,
) -> Result<RasterImage> {
    spec.validate()?;
    check_placement(img, center, nodule_diameter_px)?;
    let mut out = to_rgb(img)?;
    let g = ArrowGeometry::new(center, nodule_diameter_px, spec);
    let half = spec.stroke_width_px as f64 / 2.0;
    let y_reach = half.max(g.tip.1 - g.barb_upper.1);
    for y in pixel_span(g.tip.1 - y_reach, g.tip.1 + y_reach, out.height()) {
        let yf = y as f64;
        for x in pixel_span(g.shaft_end.0, g.tip.0, out.width()) {
            let xf = x as f64;
            let in_shaft = xf <= g.head_base_x + EPS && (yf - g.tip.1).abs() <= half + EPS;
            if in_shaft || g.in_head(xf, yf) {
                out.set_rgb(x, y, spec.color);
            }
        }
    }
    Ok(out)
}

/// Strokes polygons with butt ends and round joins; closed polygons are
/// stroked as loops. Geometry outside the image is clipped.
pub fn draw_polyline(img: &RasterImage, polys: &[Polygon], spec: &MarkerSpec) -> Result<RasterImage> {
    spec.validate()?;
    let mut out = to_rgb(img)?;
    let half = spec.stroke_width_px as f64 / 2.0;
    for poly in polys {
        let v = &poly.vertices;
        match v.len() {
            0 => continue,
            1 => {
                paint_disk(&mut out, v[0], half, spec.color);
                continue;
            }
            _ => {}
        }
        let n = v.len();
        let segments = if poly.closed { n } else { n - 1 };
        for i in 0..segments {
            paint_segment(&mut out, v[i], v[(i + 1) % n], half, spec.color);
        }
        let joins: Box<dyn Iterator<Item = usize>> = if poly.closed {
            Box::new(0..n)
        } else {
            Box::new(1..n - 1)
        };
        for i in joins {
            paint_disk(&mut out, v[i], half, spec.color);
        }
    }
    Ok(out)
}

fn paint_disk(out: &mut RasterImage, c: (f64, f64), half: f64, color: [f32; 3]) {
    for y in pixel_span(c.1 - half, c.1 + half, out.height()) {
        for x in pixel_span(c.0 - half, c.0 + half, out.width()) {
            if (x as f64 - c.0).hypot(y as f64 - c.1) <= half + EPS {
                out.set_rgb(x, y, color);
            }
        }
    }
}

fn paint_segment(out: &mut RasterImage, a: (f64, f64), b: (f64, f64), half: f64, color: [f32; 3]) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len < EPS {
        return;
    }
    let (ux, uy) = (dx / len, dy / len);
    let xs = pixel_span(a.0.min(b.0) - half, a.0.max(b.0) + half, out.width());
    let ys = pixel_span(a.1.min(b.1) - half, a.1.max(b.1) + half, out.height());
    for y in ys {
        for x in xs.clone() {
            let (px, py) = (x as f64 - a.0, y as f64 - a.1);
            let along = px * ux + py * uy;
            let across = (px * uy - py * ux).abs();
            if along >= -EPS && along <= len + EPS && across <= half + EPS {
                out.set_rgb(x, y, color);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::{extract_contour, MarkerKind};

    fn gray(w: usize, h: usize) -> RasterImage {
        RasterImage::filled(w, h, 1, 0.5).unwrap()
    }

    fn painted(img: &RasterImage) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.get(x, y, 0) == 1.0 && img.get(x, y, 1) == 0.0 {
                    v.push((x, y));
                }
            }
        }
        v
    }

    #[test]
    fn circle_ring_radius_and_area() {
        let spec = MarkerSpec::with_kind(MarkerKind::Circle);
        let out = draw_circle(&gray(300, 300), (150.0, 150.0), 30.0, &spec).unwrap();
        let px = painted(&out);
        let mean_r: f64 =
            px.iter().map(|&(x, y)| (x as f64 - 150.0).hypot(y as f64 - 150.0)).sum::<f64>() / px.len() as f64;
        assert!((mean_r - 75.0).abs() < 0.5, "mean radius {mean_r}");
        let expected = 2.0 * std::f64::consts::PI * 75.0 * 8.0;
        assert!((px.len() as f64 - expected).abs() / expected < 0.1);
    }

    #[test]
    fn circle_clips_and_validates() {
        let spec = MarkerSpec::with_kind(MarkerKind::Circle);
        let out = draw_circle(&gray(40, 40), (2.0, 2.0), 10.0, &spec).unwrap();
        assert!(!painted(&out).is_empty());
        assert!(matches!(
            draw_circle(&gray(40, 40), (2.0, 2.0), 0.0, &spec),
            Err(Error::Validation(_))
        ));
        assert!(draw_circle(&gray(40, 40), (40.0, 2.0), 1.0, &spec).is_err());
    }

    #[test]
    fn arrow_tip_and_clearance() {
        let spec = MarkerSpec::with_kind(MarkerKind::Arrow);
        let out = draw_arrow(&gray(1200, 1000), (1000.0, 800.0), 30.0, &spec).unwrap();
        assert_eq!(
            [out.get(970, 800, 0), out.get(970, 800, 1), out.get(970, 800, 2)],
            [1.0, 0.0, 0.0]
        );
        let px = painted(&out);
        assert!(px.iter().all(|&(x, _)| x <= 970));
        let min_x = px.iter().map(|p| p.0).min().unwrap();
        assert_eq!(min_x, 1000 - 30 - 120);
        let min_y = px.iter().map(|p| p.1).min().unwrap();
        assert_eq!(min_y, 800 - 15);
    }

    #[test]
    fn polyline_empty_is_identity_on_rgb() {
        let img = RasterImage::filled(10, 10, 3, 0.2).unwrap();
        assert_eq!(draw_polyline(&img, &[], &MarkerSpec::default()).unwrap(), img);
    }

    #[test]
    fn horizontal_segment_extent() {
        let spec = MarkerSpec {
            stroke_width_px: 4,
            ..MarkerSpec::default()
        };
        let poly = Polygon {
            vertices: vec![(10.0, 20.0), (50.0, 20.0)],
            closed: false,
        };
        let out = draw_polyline(&gray(80, 40), &[poly], &spec).unwrap();
        let px = painted(&out);
        let (xmin, xmax) = (px.iter().map(|p| p.0).min().unwrap(), px.iter().map(|p| p.0).max().unwrap());
        let (ymin, ymax) = (px.iter().map(|p| p.1).min().unwrap(), px.iter().map(|p| p.1).max().unwrap());
        assert!(((xmax - xmin) as i64 - 40).abs() <= 1);
        assert!(((ymax - ymin) as i64 - 4).abs() <= 1);
    }

    #[test]
    fn polyline_clips_outside_vertices() {
        let poly = Polygon {
            vertices: vec![(-20.0, 5.0), (30.0, 5.0), (30.0, 50.0)],
            closed: false,
        };
        let out = draw_polyline(&gray(20, 20), &[poly], &MarkerSpec::default()).unwrap();
        assert!(!painted(&out).is_empty());
    }

    /// Stroked contour of a disk mask lands on the ring drawn by `draw_circle`.
    #[test]
    fn contour_stroke_matches_circle() {
        let (w, h, c, r) = (120usize, 120usize, 60.0, 30.0);
        let mut m = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - c).hypot(y as f64 - c) <= r {
                    m[y * w + x] = 1.0;
                }
            }
        }
        let mask = RasterImage::new(w, h, 1, m).unwrap();
        let spec = MarkerSpec {
            stroke_width_px: 2,
            scale_factor: 1.0,
            ..MarkerSpec::default()
        };
        let polys = extract_contour(&mask).unwrap();
        let stroked = painted(&draw_polyline(&gray(w, h), &polys, &spec).unwrap());
        let ring = painted(&draw_circle(&gray(w, h), (c, c), 2.0 * r, &spec).unwrap());
        let hausdorff = directed(&stroked, &ring).max(directed(&ring, &stroked));
        assert!(hausdorff <= 2.0, "hausdorff {hausdorff}");
    }

    fn directed(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
        a.iter()
            .map(|&(ax, ay)| {
                b.iter()
                    .map(|&(bx, by)| (ax as f64 - bx as f64).hypot(ay as f64 - by as f64))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}
