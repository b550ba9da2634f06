use std::path::{Path, PathBuf};

use crate::bridge::wire::{write_tensor, WireTensor};
use crate::error::{Error, Result};
use crate::experiment::config::GridEntry;
use crate::experiment::runner::Experiment;
use crate::legrad::{aggregate, render_overlay, Heatmap};
use crate::preprocess::to_rgb;
use crate::raster::{write_png, PngDepth, RasterImage};

/// Files produced for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplainOutput {
    pub class_index: usize,
    pub class_name: String,
    pub overlay_png: PathBuf,
    pub heatmap_vpt: PathBuf,
    pub heatmap: Heatmap,
}

/// Deterministic file stem, e.g. `JPCLN001_circle_mention_malignant`.
pub fn explain_stem(image_id: &str, entry: &GridEntry, class_name: &str) -> String {
    let safe: String = image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_{}_{class_name}", entry.slug())
}

/// Overlays `map` on the square center region of `base` that the model
/// sees after shortest-side resize and center crop; the rest is untouched.
pub fn overlay_model_view(map: &Heatmap, base: &RasterImage, alpha: f64) -> Result<RasterImage> {
    let base = to_rgb(base)?;
    let (w, h) = (base.width(), base.height());
    let side = w.min(h);
    let (ox, oy) = ((w - side) / 2, (h - side) / 2);
    if side == w && side == h {
        return render_overlay(map, &base, alpha);
    }
    let mut region = Vec::with_capacity(side * side * 3);
    for y in oy..oy + side {
        let start = (y * w + ox) * 3;
        region.extend_from_slice(&base.pixels()[start..start + side * 3]);
    }
    let blended = render_overlay(map, &RasterImage::new(side, side, 3, region)?, alpha)?;
    let mut out = base.into_pixels();
    for y in 0..side {
        let dst = ((y + oy) * w + ox) * 3;
        out[dst..dst + side * 3].copy_from_slice(&blended.pixels()[y * side * 3..(y + 1) * side * 3]);
    }
    RasterImage::new(w, h, 3, out)
}

impl Experiment {
    /// Renders a LeGrad overlay per requested class for one record and
    /// grid row, plus the raw heatmap as a `P×P` wire tensor.
    pub fn explain(
        &self,
        image_id: &str,
        entry: &GridEntry,
        class_indices: &[usize],
        out_dir: &Path,
    ) -> Result<Vec<ExplainOutput>> {
        entry.validate()?;
        let rec = self.record(image_id)?;
        let prompts = self.prompts(entry)?;
        if let Some(&bad) = class_indices.iter().find(|&&c| c >= prompts.len()) {
            return Err(Error::config(format!(
                "class index {bad} out of range for {} classes",
                prompts.len()
            )));
        }
        let annotated = self.annotate(rec, entry).map_err(|e| e.for_record(image_id))?;
        let tensor = crate::preprocess::preprocess(&annotated, &self.config().preprocess)?;
        std::fs::create_dir_all(out_dir)?;

        class_indices
            .iter()
            .map(|&c| {
                let grads = self.client().attention_gradients(&tensor, &prompts.rendered[c])?;
                let heatmap = aggregate(&grads);
                let overlay = overlay_model_view(&heatmap, &annotated, self.config().overlay_alpha)?;
                let class_name = prompts.class_names[c].clone();
                let stem = explain_stem(image_id, entry, &class_name);
                let overlay_png = out_dir.join(format!("{stem}.png"));
                write_png(&overlay, PngDepth::Eight, &overlay_png)?;
                let side = heatmap.side() as u32;
                let raw = WireTensor::new(
                    vec![side, side],
                    heatmap.values().iter().map(|&v| v as f32).collect(),
                )?;
                let heatmap_vpt = out_dir.join(format!("{stem}_heatmap.vpt"));
                std::fs::write(&heatmap_vpt, write_tensor(&raw))?;
                Ok(ExplainOutput {
                    class_index: c,
                    class_name,
                    overlay_png,
                    heatmap_vpt,
                    heatmap,
                })
            })
            .collect()
    }
}
