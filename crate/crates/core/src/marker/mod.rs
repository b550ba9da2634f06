//! Visual prompts drawn into radiographs at native resolution.

mod contour;
mod draw;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::NoduleRecord;
use crate::error::{Error, Result};
use crate::preprocess::to_rgb;
use crate::raster::RasterImage;

pub use contour::{extract_contour, Polygon};
pub use draw::{draw_arrow, draw_circle, draw_polyline, ArrowGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerKind {
    None,
    Crop,
    Circle,
    Arrow,
    Contour,
}

impl MarkerKind {
    pub const ALL: [MarkerKind; 5] = [
        MarkerKind::None,
        MarkerKind::Crop,
        MarkerKind::Circle,
        MarkerKind::Arrow,
        MarkerKind::Contour,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MarkerKind::None => "none",
            MarkerKind::Crop => "crop",
            MarkerKind::Circle => "circle",
            MarkerKind::Arrow => "arrow",
            MarkerKind::Contour => "contour",
        }
    }

    /// Word used when the marker is mentioned in the text prompt.
    pub fn annotation_word(self) -> Option<&'static str> {
        match self {
            MarkerKind::Circle => Some("circle"),
            MarkerKind::Arrow => Some("arrow"),
            MarkerKind::Contour => Some("contour"),
            MarkerKind::None | MarkerKind::Crop => None,
        }
    }
}

impl fmt::Display for MarkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarkerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MarkerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown visual prompt '{s}'")))
    }
}

/// Arrow proportions, as multiples of the nodule diameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrowProportions {
    pub shaft_length: f64,
    pub head_length: f64,
    pub head_half_width: f64,
}

impl Default for ArrowProportions {
    fn default() -> Self {
        Self {
            shaft_length: 4.0,
            head_length: 1.0,
            head_half_width: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerSpec {
    pub kind: MarkerKind,
    pub color: [f32; 3],
    pub stroke_width_px: u32,
    /// Circle and bounding-box diameter as a multiple of the nodule diameter.
    pub scale_factor: f64,
    pub crop_side: usize,
    pub arrow: ArrowProportions,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        Self {
            kind: MarkerKind::None,
            color: [1.0, 0.0, 0.0],
            stroke_width_px: 8,
            scale_factor: 5.0,
            crop_side: 224,
            arrow: ArrowProportions::default(),
        }
    }
}

impl MarkerSpec {
    pub fn with_kind(kind: MarkerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stroke_width_px < 1 {
            return Err(Error::config("stroke_width_px must be at least 1"));
        }
        if !(self.scale_factor > 0.0) {
            return Err(Error::config("scale_factor must be positive"));
        }
        if self.crop_side < 1 {
            return Err(Error::config("crop_side must be positive"));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("marker color components must lie in [0, 1]"));
        }
        let a = self.arrow;
        if !(a.shaft_length > 0.0 && a.head_length > 0.0 && a.head_half_width > 0.0) {
            return Err(Error::config("arrow proportions must be positive"));
        }
        if a.head_length > a.shaft_length {
            return Err(Error::config("arrow head cannot be longer than the arrow"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::validation(format!(
                "degenerate box ({x_min}, {y_min})-({x_max}, {y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Intersects with the pixel-coordinate extent of a `width`×`height` image.
    pub fn clip(&self, width: usize, height: usize) -> Result<Self> {
        Self::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min((width - 1) as f64),
            self.y_max.min((height - 1) as f64),
        )
    }

    /// `x_min,y_min,x_max,y_max` in shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::protocol(format!("bad box coordinates '{s}': {e}")))?;
        match vals.as_slice() {
            &[a, b, c, d] => Self::new(a, b, c, d),
            _ => Err(Error::protocol(format!(
                "box needs 4 coordinates, got '{s}'"
            ))),
        }
    }
}

/// Square box of side `scale_factor × diameter` centered on the nodule.
pub fn nodule_bbox(center: (f64, f64), nodule_diameter_px: f64, scale_factor: f64) -> BoundingBox {
    let half = scale_factor * nodule_diameter_px / 2.0;
    BoundingBox {
        x_min: center.0 - half,
        y_min: center.1 - half,
        x_max: center.0 + half,
        y_max: center.1 + half,
    }
}

/// Origin of a `side` window centered on `center`, clamped inside the image.
pub fn crop_origin(width: usize, height: usize, center: (usize, usize), side: usize) -> (usize, usize) {
    let clamp = |c: usize, dim: usize| (c as i64 - (side / 2) as i64).clamp(0, (dim - side) as i64) as usize;
    (clamp(center.0, width), clamp(center.1, height))
}

pub fn crop_square(img: &RasterImage, center: (usize, usize), side: usize) -> Result<RasterImage> {
    if side == 0 || side > img.width() || side > img.height() {
        return Err(Error::validation(format!(
            "crop side {side} exceeds {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let (ox, oy) = crop_origin(img.width(), img.height(), center, side);
    let ch = img.channels();
    let mut out = Vec::with_capacity(side * side * ch);
    for y in oy..oy + side {
        let row = (y * img.width() + ox) * ch;
        out.extend_from_slice(&img.pixels()[row..row + side * ch]);
    }
    Ok(RasterImage::from_parts(side, side, ch, out))
}

/// Applies the visual prompt selected by `spec.kind` to a native-resolution image.
pub fn apply_marker(
    img: &RasterImage,
    rec: &NoduleRecord,
    spec: &MarkerSpec,
    mask: Option<&RasterImage>,
) -> Result<RasterImage> {
    spec.validate()?;
    let center = rec.center();
    match spec.kind {
        MarkerKind::None => Ok(img.clone()),
        MarkerKind::Crop => crop_square(img, (rec.x_px as usize, rec.y_px as usize), spec.crop_side),
        MarkerKind::Circle => draw_circle(img, center, rec.diameter_px, spec),
        MarkerKind::Arrow => draw_arrow(img, center, rec.diameter_px, spec),
        MarkerKind::Contour => {
            let mask = mask.ok_or_else(|| {
                Error::config(format!(
                    "contour marker for '{}' needs a segmentation mask",
                    rec.image_id
                ))
            })?;
            if mask.width() != img.width() || mask.height() != img.height() {
                return Err(Error::validation(format!(
                    "mask is {}x{} but image is {}x{}",
                    mask.width(),
                    mask.height(),
                    img.width(),
                    img.height()
                )));
            }
            let polys = extract_contour(mask)?;
            draw_polyline(&to_rgb(img)?, &polys, spec)
        }
    }
}
