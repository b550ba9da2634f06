//! Seeded synthetic dataset for offline runs: grayscale phantoms whose
//! overall brightness encodes the label, with one disk-shaped nodule each.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bridge::BackendSpec;
use crate::dataset::{DatasetConfig, Label};
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::raster::{write_png, PngDepth, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthOptions {
    pub images: usize,
    pub side: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            images: 8,
            side: 256,
            seed: 0,
        }
    }
}

pub const SYNTH_MANIFEST: &str = "manifest.csv";
pub const SYNTH_CONFIG: &str = "config.toml";

/// Writes `images/`, `masks/`, `manifest.csv` and `config.toml` (synthetic
/// backend, outputs under `results/`) into `dir`; returns the loaded config.
pub fn generate_synthetic(dir: &Path, opts: &SynthOptions) -> Result<ExperimentConfig> {
    if opts.images < 2 {
        return Err(Error::config("a synthetic dataset needs at least two images"));
    }
    if opts.side < 32 {
        return Err(Error::config("synthetic images must be at least 32 pixels wide"));
    }
    let (images, masks) = (dir.join("images"), dir.join("masks"));
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&masks)?;

    let mut rng = StdRng::seed_from_u64(opts.seed);
    let side = opts.side;
    let mut manifest = String::from("image_id,x,y,size,size_unit,label\n");
    for i in 0..opts.images {
        let id = format!("SYN{:03}", i + 1);
        let label = if i % 2 == 0 { Label::Benign } else { Label::Malignant };
        let base = if label == Label::Malignant { 0.7 } else { 0.25 };
        let diameter = rng.gen_range(side / 20..=side / 10) as f64;
        let margin = side / 8;
        let cx = rng.gen_range(margin..side - margin);
        let cy = rng.gen_range(margin..side - margin);

        let mut pixels = Vec::with_capacity(side * side);
        let mut mask = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let inside = (x as f64 - cx as f64).hypot(y as f64 - cy as f64) <= diameter / 2.0;
                let shade = 0.05 * (y as f64 / side as f64) + rng.gen_range(-0.04..0.04);
                let v = base + shade + if inside { 0.2 } else { 0.0 };
                pixels.push(v.clamp(0.0, 1.0) as f32);
                mask.push(if inside { 1.0 } else { 0.0 });
            }
        }
        write_png(&RasterImage::new(side, side, 1, pixels)?, PngDepth::Eight, &images.join(format!("{id}.png")))?;
        write_png(&RasterImage::new(side, side, 1, mask)?, PngDepth::Eight, &masks.join(format!("{id}.png")))?;
        manifest.push_str(&format!("{id},{cx},{cy},{diameter},px,{label}\n"));
    }
    std::fs::write(dir.join(SYNTH_MANIFEST), manifest)?;

    let mut cfg = ExperimentConfig {
        dataset: DatasetConfig {
            manifest_path: SYNTH_MANIFEST.into(),
            image_root: "images".into(),
            mask_root: Some("masks".into()),
            invert_grayscale: false,
            ..DatasetConfig::default()
        },
        backend: Some(BackendSpec::Synthetic),
        seed: opts.seed,
        ..ExperimentConfig::default()
    };
    cfg.marker_style.crop_side = cfg.marker_style.crop_side.min(side / 2);
    std::fs::write(dir.join(SYNTH_CONFIG), cfg.to_toml_string()?)?;
    ExperimentConfig::load(&dir.join(SYNTH_CONFIG))
}
