//! Nodule manifest parsing and radiograph loading.
//!
//! The manifest is a UTF-8 CSV with the mandatory header
//! `image_id,x,y,size,size_unit,label`. Images are either headerless raw
//! files (big-endian `u16` samples, square, side inferred from the byte
//! count) or 8/16-bit grayscale PNGs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{decode_png, RasterImage};

pub const MANIFEST_HEADER: [&str; 6] = ["image_id", "x", "y", "size", "size_unit", "label"];

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    /// 1 for the positive (malignant) class.
    pub fn as_binary(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malignant => 1,
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(Label::Benign),
            "malignant" => Ok(Label::Malignant),
            other => Err(Error::validation(format!("unknown label '{other}'"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        })
    }
}

/// One annotated lesion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoduleRecord {
    pub image_id: String,
    pub x_px: u32,
    pub y_px: u32,
    pub diameter_px: f64,
    pub label: Label,
}

impl NoduleRecord {
    pub fn center(&self) -> (f64, f64) {
        (self.x_px as f64, self.y_px as f64)
    }

    /// Fails when the nodule center falls outside `img`.
    pub fn check_bounds(&self, img: &RasterImage) -> Result<()> {
        if (self.x_px as usize) < img.width() && (self.y_px as usize) < img.height() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "nodule center ({}, {}) outside {}x{} image '{}'",
                self.x_px,
                self.y_px,
                img.width(),
                img.height(),
                self.image_id
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub manifest_path: PathBuf,
    pub image_root: PathBuf,
    /// Precomputed lesion masks (`<image_id>.png`), used by contour markers
    /// instead of asking the backend for segmentation.
    pub mask_root: Option<PathBuf>,
    pub pixel_spacing_mm: f64,
    pub invert_grayscale: bool,
    pub raw_bit_depth: u8,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            manifest_path: PathBuf::new(),
            image_root: PathBuf::new(),
            mask_root: None,
            pixel_spacing_mm: 0.175,
            invert_grayscale: true,
            raw_bit_depth: 12,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_spacing_mm > 0.0) || !self.pixel_spacing_mm.is_finite() {
            return Err(Error::config(format!(
                "pixel_spacing_mm must be positive, got {}",
                self.pixel_spacing_mm
            )));
        }
        if !(8..=16).contains(&self.raw_bit_depth) {
            return Err(Error::config(format!(
                "raw_bit_depth must lie in 8..=16, got {}",
                self.raw_bit_depth
            )));
        }
        Ok(())
    }

    /// Resolves `image_id` under `image_root`, trying common extensions when
    /// the bare id does not exist.
    pub fn image_path(&self, image_id: &str) -> PathBuf {
        let bare = self.image_root.join(image_id);
        if bare.is_file() {
            return bare;
        }
        for ext in ["png", "IMG", "img", "raw"] {
            let candidate = self.image_root.join(format!("{image_id}.{ext}"));
            if candidate.is_file() {
                return candidate;
            }
        }
        bare
    }

    pub fn mask_path(&self, image_id: &str) -> Option<PathBuf> {
        self.mask_root
            .as_ref()
            .map(|root| root.join(format!("{image_id}.png")))
    }
}

/// Parses manifest text into records, converting millimeter sizes to pixels.
pub fn parse_manifest(text: &str, cfg: &DatasetConfig) -> Result<Vec<NoduleRecord>> {
    cfg.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be '{}', got '{}'",
                MANIFEST_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };

        let field = |i: usize| row.get(i).unwrap_or_default();
        let image_id = field(0).to_string();
        if image_id.is_empty() {
            return Err(parse_err("empty image_id".into()));
        }
        let x_px: u32 = field(1)
            .parse()
            .map_err(|_| parse_err(format!("x '{}' is not a pixel index", field(1))))?;
        let y_px: u32 = field(2)
            .parse()
            .map_err(|_| parse_err(format!("y '{}' is not a pixel index", field(2))))?;
        let size: f64 = field(3)
            .parse()
            .map_err(|_| parse_err(format!("size '{}' is not a number", field(3))))?;
        let diameter_px = match field(4) {
            "px" => size,
            "mm" => size / cfg.pixel_spacing_mm,
            other => return Err(parse_err(format!("size_unit '{other}' must be px or mm"))),
        };
        if !(diameter_px > 0.0) || !diameter_px.is_finite() {
            return Err(Error::validation(format!(
                "line {line}: nodule size must be positive, got {size}"
            )));
        }
        let label = field(5)
            .parse::<Label>()
            .map_err(|e| Error::validation(format!("line {line}: {e}")))?;

        records.push(NoduleRecord {
            image_id,
            x_px,
            y_px,
            diameter_px,
            label,
        });
    }
    Ok(records)
}

pub fn read_manifest(cfg: &DatasetConfig) -> Result<Vec<NoduleRecord>> {
    let text = std::fs::read_to_string(&cfg.manifest_path)?;
    parse_manifest(&text, cfg)
}

/// Loads a radiograph as a single-channel image in `[0, 1]`.
pub fn load_image(path: &Path, cfg: &DatasetConfig) -> Result<RasterImage> {
    let bytes = std::fs::read(path)?;
    decode_image(&bytes, cfg)
}

pub fn decode_image(bytes: &[u8], cfg: &DatasetConfig) -> Result<RasterImage> {
    cfg.validate()?;
    let img = if bytes.starts_with(&PNG_SIGNATURE) {
        let (img, _) = decode_png(bytes)?;
        if img.channels() != 1 {
            return Err(Error::format("png", "radiographs must be grayscale"));
        }
        img
    } else {
        decode_raw(bytes, cfg.raw_bit_depth)?
    };
    if !cfg.invert_grayscale {
        return Ok(img);
    }
    let (w, h) = (img.width(), img.height());
    let pixels = img.into_pixels().into_iter().map(|v| 1.0 - v).collect();
    Ok(RasterImage::from_parts(w, h, 1, pixels))
}

fn decode_raw(bytes: &[u8], bit_depth: u8) -> Result<RasterImage> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(2) {
        return Err(Error::format(
            "raw size",
            format!("{} bytes is not a whole number of 16-bit samples", bytes.len()),
        ));
    }
    let samples = bytes.len() / 2;
    let side = integer_sqrt(samples);
    if side * side != samples {
        return Err(Error::format(
            "raw size",
            format!("{samples} samples do not form a square image"),
        ));
    }
    let max = (1u32 << bit_depth) - 1;
    let scale = max as f32;
    let mut pixels = Vec::with_capacity(samples);
    for (i, pair) in bytes.chunks_exact(2).enumerate() {
        let v = u16::from_be_bytes([pair[0], pair[1]]) as u32;
        if v > max {
            return Err(Error::format(
                "raw sample",
                format!("sample {i} = {v} exceeds {bit_depth}-bit maximum {max}"),
            ));
        }
        pixels.push(v as f32 / scale);
    }
    Ok(RasterImage::from_parts(side, side, 1, pixels))
}

/// Encodes a single-channel image as big-endian raw samples of `bit_depth` bits.
pub fn encode_raw(img: &RasterImage, bit_depth: u8) -> Result<Vec<u8>> {
    if img.channels() != 1 || img.width() != img.height() {
        return Err(Error::validation("raw images are square and single-channel"));
    }
    let max = ((1u32 << bit_depth) - 1) as f32;
    Ok(img
        .pixels()
        .iter()
        .flat_map(|&v| ((v * max).round() as u16).to_be_bytes())
        .collect())
}

fn integer_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}
