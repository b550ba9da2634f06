//! Model input preprocessing: grayscale expansion, shortest-side bicubic
//! resize, center crop and per-channel normalization.
//!
//! The resampler follows the convolution scheme used by the common Python
//! imaging stack: for a downscale factor `s > 1` the bicubic kernel is
//! stretched by `s` (antialiasing), output pixel `i` is centered at
//! `(i + 0.5) · s` in input coordinates, taps falling outside the image are
//! dropped and the remaining weights renormalized to sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Mean of the CLIP-family image normalization.
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
/// Standard deviation of the CLIP-family image normalization.
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

const BICUBIC_A: f64 = -0.5;
const BICUBIC_SUPPORT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeKernel {
    Bicubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_side: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub resize_kernel: ResizeKernel,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_side: 224,
            mean: CLIP_MEAN,
            std: CLIP_STD,
            resize_kernel: ResizeKernel::Bicubic,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_side < 1 {
            return Err(Error::config("target_side must be positive"));
        }
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::config(format!(
                "normalization std must be positive, got {:?}",
                self.std
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("normalization mean must be finite"));
        }
        Ok(())
    }
}

/// Channel-major `(3, H, W)` model input.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width || height == 0 || width == 0 {
            return Err(Error::validation(format!(
                "tensor data of length {} does not match (3, {height}, {width})",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("image tensor holds non-finite values"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [3, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Replicates a grayscale image into three channels.
pub fn to_rgb(img: &RasterImage) -> Result<RasterImage> {
    match img.channels() {
        3 => Ok(img.clone()),
        1 => {
            let pixels = img.pixels().iter().flat_map(|&v| [v, v, v]).collect();
            Ok(RasterImage::from_parts(img.width(), img.height(), 3, pixels))
        }
        c => Err(Error::validation(format!("cannot expand {c}-channel image"))),
    }
}

fn bicubic(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Per-output-pixel tap window: first input index and normalized weights.
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

fn resample_taps(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    let filter_scale = scale.max(1.0);
    let support = BICUBIC_SUPPORT * filter_scale;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            // truncation toward zero, as in the reference resampler
            let lo = ((center - support + 0.5) as i64).max(0) as usize;
            let hi = ((center + support + 0.5) as i64).min(in_len as i64) as usize;
            let mut weights: Vec<f64> = (lo..hi)
                .map(|j| bicubic((j as f64 - center + 0.5) / filter_scale))
                .collect();
            let total: f64 = weights.iter().sum();
            if total != 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            Taps { start: lo, weights }
        })
        .collect()
}

/// Resizes to exactly `out_w`×`out_h` with the antialiased bicubic scheme.
pub fn resize_bicubic(img: &RasterImage, out_w: usize, out_h: usize) -> Result<RasterImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::validation("resize target must be positive"));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut buf: Vec<f64> = img.pixels().iter().map(|&v| v as f64).collect();
    let mut cur_w = w;

    if out_w != w {
        let taps = resample_taps(w, out_w);
        let mut next = vec![0.0; out_w * h * ch];
        for y in 0..h {
            let row = &buf[y * w * ch..(y + 1) * w * ch];
            for (ox, t) in taps.iter().enumerate() {
                for c in 0..ch {
                    next[(y * out_w + ox) * ch + c] = t
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(k, wt)| wt * row[(t.start + k) * ch + c])
                        .sum();
                }
            }
        }
        buf = next;
        cur_w = out_w;
    }

    if out_h != h {
        let taps = resample_taps(h, out_h);
        let stride = cur_w * ch;
        let mut next = vec![0.0; out_h * stride];
        for (oy, t) in taps.iter().enumerate() {
            let dst = &mut next[oy * stride..(oy + 1) * stride];
            for (k, wt) in t.weights.iter().enumerate() {
                let src = &buf[(t.start + k) * stride..(t.start + k + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
        buf = next;
    }

    let pixels = buf.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    Ok(RasterImage::from_parts(out_w, out_h, ch, pixels))
}

/// Output dimensions after scaling the shortest side to `target`.
pub fn shortest_side_dims(width: usize, height: usize, target: usize) -> (usize, usize) {
    let scale_long = |long: usize, short: usize| {
        ((target as f64 * long as f64 / short as f64).round() as usize).max(1)
    };
    if width <= height {
        (target, scale_long(height, width))
    } else {
        (scale_long(width, height), target)
    }
}

pub fn resize_shortest(img: &RasterImage, target: usize, kernel: ResizeKernel) -> Result<RasterImage> {
    let ResizeKernel::Bicubic = kernel;
    if target < 1 {
        return Err(Error::validation("resize target must be at least 1"));
    }
    if img.width().min(img.height()) == target {
        return Ok(img.clone());
    }
    let (w, h) = shortest_side_dims(img.width(), img.height(), target);
    resize_bicubic(img, w, h)
}

/// Centered `side`×`side` window; odd remainders drop the extra pixel on the
/// right/bottom.
pub fn center_crop(img: &RasterImage, side: usize) -> Result<RasterImage> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if side == 0 || w < side || h < side {
        return Err(Error::validation(format!(
            "cannot center-crop {side}x{side} from {w}x{h}"
        )));
    }
    if w == side && h == side {
        return Ok(img.clone());
    }
    let (ox, oy) = ((w - side) / 2, (h - side) / 2);
    let mut out = Vec::with_capacity(side * side * ch);
    for y in oy..oy + side {
        let start = (y * w + ox) * ch;
        out.extend_from_slice(&img.pixels()[start..start + side * ch]);
    }
    Ok(RasterImage::from_parts(side, side, ch, out))
}

pub fn normalize(img: &RasterImage, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    if img.channels() != 3 {
        return Err(Error::validation("normalize expects a 3-channel image"));
    }
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0f32; 3 * w * h];
    for (i, px) in img.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = (px[c] - cfg.mean[c]) / cfg.std[c];
        }
    }
    ImageTensor::new(h, w, data)
}

/// Inverse of [`normalize`], back to an interleaved RGB image.
pub fn denormalize(t: &ImageTensor, cfg: &PreprocessConfig) -> Result<RasterImage> {
    cfg.validate()?;
    let [_, h, w] = t.dims();
    let mut pixels = vec![0.0f32; 3 * w * h];
    for c in 0..3 {
        for i in 0..w * h {
            pixels[i * 3 + c] = (t.data[c * w * h + i] * cfg.std[c] + cfg.mean[c]).clamp(0.0, 1.0);
        }
    }
    RasterImage::new(w, h, 3, pixels)
}

/// Full pipeline: RGB expansion, resize, crop, normalize.
pub fn preprocess(img: &RasterImage, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    let rgb = to_rgb(img)?;
    let resized = resize_shortest(&rgb, cfg.target_side, cfg.resize_kernel)?;
    let cropped = center_crop(&resized, cfg.target_side)?;
    normalize(&cropped, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_expansion() {
        let g = RasterImage::filled(3, 2, 1, 0.3).unwrap();
        let rgb = to_rgb(&g).unwrap();
        assert_eq!(rgb.channels(), 3);
        assert!(rgb.pixels().iter().all(|&v| v == 0.3));
        assert_eq!(to_rgb(&rgb).unwrap(), rgb);
    }

    #[test]
    fn rgb_expansion_exhaustive() {
        let px: Vec<f32> = (0..16).map(|i| i as f32 / 15.0).collect();
        let g = RasterImage::new(4, 4, 1, px).unwrap();
        let rgb = to_rgb(&g).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..3 {
                    assert_eq!(rgb.get(x, y, c), g.get(x, y, 0));
                }
            }
        }
    }

    #[test]
    fn kernel_shape() {
        assert_eq!(bicubic(0.0), 1.0);
        assert_eq!(bicubic(1.0), 0.0);
        assert_eq!(bicubic(2.0), 0.0);
        assert!((bicubic(0.5) - 0.5625).abs() < 1e-12);
        assert!((bicubic(1.5) + 0.0625).abs() < 1e-12);
    }

    #[test]
    fn taps_sum_to_one() {
        for (i, o) in [(2048, 224), (300, 224), (10, 37), (5, 1)] {
            for t in resample_taps(i, o) {
                assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(t.start + t.weights.len() <= i);
            }
        }
    }

    #[test]
    fn identity_resize_short_circuits() {
        let px: Vec<f32> = (0..224 * 224).map(|i| (i % 251) as f32 / 250.0).collect();
        let img = RasterImage::new(224, 224, 1, px).unwrap();
        assert_eq!(resize_shortest(&img, 224, ResizeKernel::Bicubic).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = RasterImage::filled(301, 517, 3, 0.37).unwrap();
        let out = resize_shortest(&img, 224, ResizeKernel::Bicubic).unwrap();
        assert_eq!((out.width(), out.height()), (224, 385));
        assert!(out.pixels().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        let up = resize_shortest(&RasterImage::filled(7, 9, 1, 0.8).unwrap(), 20, ResizeKernel::Bicubic).unwrap();
        assert!(up.pixels().iter().all(|&v| (v - 0.8).abs() < 1e-6));
    }

    #[test]
    fn crop_offsets() {
        let px: Vec<f32> = (0..298 * 224).map(|i| (i % 298) as f32 / 297.0).collect();
        let img = RasterImage::new(298, 224, 1, px).unwrap();
        let c = center_crop(&img, 224).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(37, 0, 0));
        assert!(center_crop(&img, 225).is_err());
    }

    #[test]
    fn square_pipeline_has_zero_offset() {
        let img = RasterImage::filled(2048, 2048, 1, 0.5).unwrap();
        let r = resize_shortest(&img, 224, ResizeKernel::Bicubic).unwrap();
        assert_eq!((r.width(), r.height()), (224, 224));
        assert_eq!(center_crop(&r, 224).unwrap(), r);
    }

    #[test]
    fn normalize_examples() {
        let half = PreprocessConfig {
            mean: [0.5; 3],
            std: [0.5; 3],
            ..PreprocessConfig::default()
        };
        let t = normalize(&RasterImage::filled(4, 4, 3, 0.5).unwrap(), &half).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));

        let cfg = PreprocessConfig::default();
        let t = normalize(&RasterImage::filled(2, 2, 3, 1.0).unwrap(), &cfg).unwrap();
        for c in 0..3 {
            assert!((t.get(c, 1, 1) - (1.0 - cfg.mean[c]) / cfg.std[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_std_is_config_error() {
        let cfg = PreprocessConfig {
            std: [0.5, 0.0, 0.5],
            ..PreprocessConfig::default()
        };
        assert!(matches!(
            normalize(&RasterImage::filled(2, 2, 3, 1.0).unwrap(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn upsample_overshoot_is_clamped() {
        let px: Vec<f32> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let img = RasterImage::new(8, 1, 1, px).unwrap();
        let out = resize_bicubic(&img, 29, 1).unwrap();
        assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
