//! Layer-merged attention-gradient heatmaps and their image overlays.
//!
//! Per layer the positive part of the gradient with respect to the attention
//! map is averaged over heads and query tokens, giving one relevance value
//! per key token. Layers are averaged with equal weight, the class token is
//! dropped, the patch values are laid out on the `P×P` grid and min–max
//! normalized.

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Gradients of a similarity score with respect to every layer's attention
/// probabilities, each shaped `(heads, tokens, tokens)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGradients {
    heads: usize,
    tokens: usize,
    patch_grid: usize,
    layers: Vec<Vec<f32>>,
}

impl AttentionGradients {
    pub fn new(heads: usize, tokens: usize, layers: Vec<Vec<f32>>) -> Result<Self> {
        if layers.is_empty() || heads == 0 {
            return Err(Error::validation("attention gradients need at least one layer and head"));
        }
        let patch_grid = patch_grid_side(tokens)?;
        let expected = heads * tokens * tokens;
        if let Some((i, l)) = layers.iter().enumerate().find(|(_, l)| l.len() != expected) {
            return Err(Error::validation(format!(
                "layer {i} holds {} values, expected ({heads}, {tokens}, {tokens})",
                l.len()
            )));
        }
        Ok(Self {
            heads,
            tokens,
            patch_grid,
            layers,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn patch_grid(&self) -> usize {
        self.patch_grid
    }

    pub fn layers(&self) -> &[Vec<f32>] {
        &self.layers
    }
}

/// Side of the patch grid for `tokens` = one class token plus `P²` patches.
pub fn patch_grid_side(tokens: usize) -> Result<usize> {
    if tokens < 2 {
        return Err(Error::validation(format!("{tokens} tokens leave no patches")));
    }
    let patches = tokens - 1;
    let side = (patches as f64).sqrt().round() as usize;
    if side * side != patches {
        return Err(Error::validation(format!(
            "{tokens} tokens: {patches} patches do not form a square grid"
        )));
    }
    Ok(side)
}

/// `P×P` grid of relevance values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    side: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 || values.len() != side * side {
            return Err(Error::validation("heatmap must be a non-empty square grid"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation("heatmap values must lie in [0, 1]"));
        }
        Ok(Self { side, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    /// Row-major index of the largest value (first on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Layer-averaged, class-token-free relevance per patch, before normalization.
pub fn merged_relevance(grads: &AttentionGradients) -> Vec<f64> {
    let t = grads.tokens;
    let rows = (grads.heads * t) as f64;
    let mut merged = vec![0.0f64; t];
    for layer in &grads.layers {
        let mut per_key = vec![0.0f64; t];
        for row in layer.chunks_exact(t) {
            for (acc, &g) in per_key.iter_mut().zip(row) {
                if g > 0.0 {
                    *acc += g as f64;
                }
            }
        }
        for (m, k) in merged.iter_mut().zip(&per_key) {
            *m += k / rows;
        }
    }
    let layers = grads.layers.len() as f64;
    merged.into_iter().skip(1).map(|v| v / layers).collect()
}

/// Merges all layers into a normalized heatmap. A map without spatial
/// contrast (every patch equal, including all zero) comes back as zeros.
pub fn aggregate(grads: &AttentionGradients) -> Heatmap {
    let merged = merged_relevance(grads);
    let min = merged.iter().copied().fold(f64::INFINITY, f64::min);
    let max = merged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let values = if range > 0.0 {
        merged.iter().map(|v| (v - min) / range).collect()
    } else {
        vec![0.0; merged.len()]
    };
    Heatmap {
        side: grads.patch_grid,
        values,
    }
}

/// Bilinear sample at grid coordinates `(u, v)` (column, row), clamped to
/// the grid.
pub fn sample_bilinear(map: &Heatmap, u: f64, v: f64) -> f64 {
    let last = (map.side - 1) as f64;
    let (u, v) = (u.clamp(0.0, last), v.clamp(0.0, last));
    let (c0, r0) = (u.floor() as usize, v.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(map.side - 1), (r0 + 1).min(map.side - 1));
    let (tu, tv) = (u - c0 as f64, v - r0 as f64);
    let top = map.get(r0, c0) * (1.0 - tu) + map.get(r0, c1) * tu;
    let bottom = map.get(r1, c0) * (1.0 - tu) + map.get(r1, c1) * tu;
    top * (1.0 - tv) + bottom * tv
}

/// Upsamples to `width`×`height` with grid cells aligned to pixel centers.
pub fn upsample(map: &Heatmap, width: usize, height: usize) -> Vec<f64> {
    let p = map.side as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = (y as f64 + 0.5) * p / height as f64 - 0.5;
        for x in 0..width {
            let u = (x as f64 + 0.5) * p / width as f64 - 0.5;
            out.push(sample_bilinear(map, u, v));
        }
    }
    out
}

const RAMP: [(f64, [f64; 3]); 5] = [
    (0.0, [0.0, 0.0, 1.0]),
    (0.25, [0.0, 1.0, 1.0]),
    (0.5, [0.0, 1.0, 0.0]),
    (0.75, [1.0, 1.0, 0.0]),
    (1.0, [1.0, 0.0, 0.0]),
];

/// Blue → cyan → green → yellow → red.
pub fn color_ramp(m: f64) -> [f64; 3] {
    let m = m.clamp(0.0, 1.0);
    for pair in RAMP.windows(2) {
        let ((a, ca), (b, cb)) = (pair[0], pair[1]);
        if m <= b {
            let t = (m - a) / (b - a);
            return [0, 1, 2].map(|i| ca[i] + (cb[i] - ca[i]) * t);
        }
    }
    RAMP[RAMP.len() - 1].1
}

/// Blends the colorized heatmap over `base`: `(1 − α·m)·base + α·m·color`.
pub fn render_overlay(map: &Heatmap, base: &RasterImage, alpha: f64) -> Result<RasterImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation(format!("alpha {alpha} outside [0, 1]")));
    }
    if base.channels() != 3 {
        return Err(Error::validation("overlay base must be a 3-channel image"));
    }
    if alpha == 0.0 {
        return Ok(base.clone());
    }
    let (w, h) = (base.width(), base.height());
    let up = upsample(map, w, h);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for (px, &m) in base.pixels().chunks_exact(3).zip(&up) {
        let color = color_ramp(m);
        let k = alpha * m;
        for c in 0..3 {
            let v = (1.0 - k) * px[c] as f64 + k * color[c];
            pixels.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Ok(RasterImage::from_parts(w, h, 3, pixels))
}
