//! In-memory raster type and PNG encode/decode.

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::validation(format!(
                "images carry 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::validation(format!(
                "pixel buffer holds {} values, expected {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Skips the range scan; callers guarantee every value lies in `[0, 1]`.
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub(crate) fn set_rgb(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let base = (y * self.width + x) * self.channels;
        self.pixels[base..base + 3].copy_from_slice(&rgb);
    }

    /// Lowercase hex SHA-256 over dims and pixel bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.width, self.height, self.channels] {
            h.update((d as u64).to_le_bytes());
        }
        for v in &self.pixels {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Decodes an 8- or 16-bit grayscale or RGB PNG. Returns the image and the
/// source bit depth.
pub fn decode_png(bytes: &[u8]) -> Result<(RasterImage, u8)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format("png", e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("png", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format("png", e.to_string()))?;
    buf.truncate(info.buffer_size());

    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::format(
                "png",
                format!("unsupported color type {other:?}"),
            ))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let (pixels, depth) = match info.bit_depth {
        png::BitDepth::Eight => (buf.iter().map(|&b| b as f32 / 255.0).collect(), 8),
        png::BitDepth::Sixteen => (
            buf.chunks_exact(2)
                .map(|p| u16::from_be_bytes([p[0], p[1]]) as f32 / 65535.0)
                .collect(),
            16,
        ),
        other => {
            return Err(Error::format(
                "png",
                format!("unsupported bit depth {other:?}"),
            ))
        }
    };
    Ok((RasterImage::new(width, height, channels, pixels)?, depth))
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path)?;
    decode_png(&bytes).map(|(img, _)| img)
}

/// Bit depth used when quantizing to PNG.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

pub fn encode_png<W: Write>(img: &RasterImage, depth: PngDepth, out: W) -> Result<()> {
    let mut enc = png::Encoder::new(out, img.width as u32, img.height as u32);
    enc.set_color(if img.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    let data: Vec<u8> = match depth {
        PngDepth::Eight => {
            enc.set_depth(png::BitDepth::Eight);
            img.pixels.iter().map(|&v| quantize(v, 255.0) as u8).collect()
        }
        PngDepth::Sixteen => {
            enc.set_depth(png::BitDepth::Sixteen);
            img.pixels
                .iter()
                .flat_map(|&v| (quantize(v, 65535.0) as u16).to_be_bytes())
                .collect()
        }
    };
    let to_fmt = |e: png::EncodingError| Error::format("png", e.to_string());
    let mut writer = enc.write_header().map_err(to_fmt)?;
    writer.write_image_data(&data).map_err(to_fmt)?;
    writer.finish().map_err(to_fmt)?;
    Ok(())
}

pub fn write_png(img: &RasterImage, depth: PngDepth, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    encode_png(img, depth, file)
}

fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round()
}
