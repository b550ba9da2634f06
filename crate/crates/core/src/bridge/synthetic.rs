//! Deterministic stand-in model for offline runs and tests.
//!
//! Image embeddings rotate between the "benign" and "malignant" text
//! directions with the mean brightness of the input, attention gradients
//! peak on reddish bright patches, and segmentation returns the nodule disk
//! implied by a 5× box. Nothing here is learned; it only exercises the
//! protocol and pipeline with known geometry.

use sha2::{Digest, Sha256};

use crate::bridge::protocol::{Op, Request};
use crate::bridge::wire::WireTensor;
use crate::bridge::{Backend, ModelInfo};
use crate::error::{Error, Result};
use crate::marker::BoundingBox;

#[derive(Clone, Debug)]
pub struct SyntheticModel {
    pub embed_dim: usize,
    pub logit_scale: f64,
    pub layers: usize,
    pub heads: usize,
    pub patch_grid: usize,
}

impl Default for SyntheticModel {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            logit_scale: 100.0,
            layers: 2,
            heads: 2,
            patch_grid: 4,
        }
    }
}

fn hashed_unit(seed: &[u8], i: usize) -> f32 {
    let digest = Sha256::new()
        .chain_update(seed)
        .chain_update((i as u64).to_le_bytes())
        .finalize();
    let word = u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]]);
    (word as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32
}

fn image_dims(req: &Request) -> Result<(&WireTensor, usize, usize, usize)> {
    let t = req
        .tensor
        .as_ref()
        .ok_or_else(|| Error::protocol(format!("{} needs an image tensor", req.op.name())))?;
    match *t.dims() {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok((t, c as usize, h as usize, w as usize)),
        _ => Err(Error::protocol(format!("image tensor must be (C, H, W), got {:?}", t.dims()))),
    }
}

impl SyntheticModel {
    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            embed_dim: self.embed_dim,
            logit_scale: self.logit_scale,
            layers: self.layers,
            heads: self.heads,
            tokens: self.patch_grid * self.patch_grid + 1,
        }
    }

    fn embed_text(&self, prompt: &str) -> Vec<f32> {
        let mut v: Vec<f32> = (0..self.embed_dim)
            .map(|i| 0.01 * hashed_unit(prompt.as_bytes(), i))
            .collect();
        let axis = if prompt.contains("malignant") {
            1
        } else if prompt.contains("benign") {
            0
        } else {
            2
        };
        v[axis] += 1.0;
        v
    }

    fn embed_image(&self, req: &Request) -> Result<Vec<f32>> {
        let (t, c, h, w) = image_dims(req)?;
        let plane = h * w;
        let channel_mean = |ch: usize| {
            let ch = ch.min(c - 1);
            t.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).sum::<f64>() / plane as f64
        };
        let brightness = channel_mean(1);
        let theta = std::f64::consts::FRAC_PI_4 + 0.6 * brightness.tanh();
        let mut v = vec![0.0f32; self.embed_dim];
        v[0] = theta.cos() as f32;
        v[1] = theta.sin() as f32;
        v[3] = (0.1 * (channel_mean(0) - brightness)) as f32;
        Ok(v)
    }

    fn attn_grads(&self, req: &Request) -> Result<Vec<WireTensor>> {
        let (t, c, h, w) = image_dims(req)?;
        let g = self.patch_grid;
        let tokens = g * g + 1;
        let plane = h * w;
        let at = |ch: usize, y: usize, x: usize| t.data()[ch.min(c - 1) * plane + y * w + x] as f64;

        let mut relevance = vec![-0.1f64; tokens];
        for (k, rel) in relevance.iter_mut().enumerate().skip(1) {
            let (row, col) = ((k - 1) / g, (k - 1) % g);
            let (y0, y1) = (row * h / g, ((row + 1) * h / g).max(row * h / g + 1));
            let (x0, x1) = (col * w / g, ((col + 1) * w / g).max(col * w / g + 1));
            let (mut red, mut bright, mut n) = (0.0f64, 0.0f64, 0.0f64);
            for y in y0..y1.min(h) {
                for x in x0..x1.min(w) {
                    red += at(0, y, x) - at(1, y, x);
                    bright += at(1, y, x);
                    n += 1.0;
                }
            }
            *rel = (red + 0.25 * bright) / n.max(1.0);
        }
        let class_gain = if req.metadata.contains("malignant") { 1.0 } else { 0.5 };

        (0..self.layers)
            .map(|l| {
                let mut data = Vec::with_capacity(self.heads * tokens * tokens);
                for head in 0..self.heads {
                    for q in 0..tokens {
                        let gain = class_gain
                            * (1.0 + 0.5 * l as f64)
                            * (1.0 + 0.25 * head as f64)
                            * if q == 0 { 1.0 } else { 0.5 };
                        data.extend(relevance.iter().map(|r| (r * gain) as f32));
                    }
                }
                WireTensor::new(vec![self.heads as u32, tokens as u32, tokens as u32], data)
            })
            .collect()
    }

    fn segment(&self, req: &Request) -> Result<WireTensor> {
        let (_, _, h, w) = image_dims(req)?;
        let bbox = BoundingBox::from_csv(&req.metadata)?;
        if bbox.x_max > w as f64 || bbox.y_max > h as f64 || bbox.x_min < 0.0 || bbox.y_min < 0.0 {
            return Err(Error::validation(format!("box {} outside {w}x{h} image", req.metadata)));
        }
        let (cx, cy) = bbox.center();
        let radius = ((bbox.x_max - bbox.x_min).min(bbox.y_max - bbox.y_min) / 10.0).max(1.0);
        let mut mask = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).hypot(y as f64 - cy) <= radius {
                    mask[y * w + x] = 1.0;
                }
            }
        }
        WireTensor::new(vec![h as u32, w as u32], mask)
    }
}

impl Backend for SyntheticModel {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        Ok(match req.op {
            Op::ModelInfo => vec![self.info().to_tensor()],
            Op::EmbedText => vec![WireTensor::vector(self.embed_text(&req.metadata))],
            Op::EmbedImage => vec![WireTensor::vector(self.embed_image(req)?)],
            Op::AttnGrads => self.attn_grads(req)?,
            Op::SegmentBox => vec![self.segment(req)?],
        })
    }
}
