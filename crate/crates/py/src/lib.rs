//! Python bindings: images and markers, preprocessing, zero-shot scoring,
//! metrics, attention-gradient aggregation, the tensor wire format and
//! whole-grid runs.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use vprompt::bridge::{self, BackendSpec, WireTensor};
use vprompt::dataset::{self, DatasetConfig, Label, NoduleRecord};
use vprompt::experiment::{grid_csv, Experiment, ExperimentConfig};
use vprompt::legrad::{self, AttentionGradients};
use vprompt::marker::{self, MarkerKind, MarkerSpec};
use vprompt::metrics;
use vprompt::preprocess::{self as prep, PreprocessConfig};
use vprompt::raster::{self, PngDepth, RasterImage};
use vprompt::zero_shot::{self, EmbeddingVector, ZeroShotConfig};

create_exception!(vprompt_py, VpromptError, PyException);

fn err(e: vprompt::Error) -> PyErr {
    VpromptError::new_err(e.to_string())
}

/// Image with values in [0, 1], stored row-major and channel-interleaved.
#[pyclass(name = "Image", module = "vprompt_py", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: RasterImage,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: RasterImage::new(width, height, channels, pixels).map_err(err)?,
        })
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, channels: usize, value: f32) -> PyResult<Self> {
        Ok(Self {
            inner: RasterImage::filled(width, height, channels, value).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read_png(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: raster::read_png(&path).map_err(err)?,
        })
    }

    fn write_png(&self, path: PathBuf) -> PyResult<()> {
        raster::write_png(&self.inner, PngDepth::Eight, &path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn pixels(&self) -> Vec<f32> {
        self.inner.pixels().to_vec()
    }

    fn get(&self, x: usize, y: usize, c: usize) -> PyResult<f32> {
        if x >= self.inner.width() || y >= self.inner.height() || c >= self.inner.channels() {
            return Err(VpromptError::new_err(format!("pixel ({x}, {y}, {c}) out of range")));
        }
        Ok(self.inner.get(x, y, c))
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn __repr__(&self) -> String {
        format!(
            "Image(width={}, height={}, channels={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels()
        )
    }
}

fn record_dict<'py>(py: Python<'py>, r: &NoduleRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("image_id", &r.image_id)?;
    d.set_item("x", r.x_px)?;
    d.set_item("y", r.y_px)?;
    d.set_item("diameter_px", r.diameter_px)?;
    d.set_item("label", r.label.to_string())?;
    Ok(d)
}

/// Parses manifest CSV text into a list of record dicts.
#[pyfunction]
#[pyo3(signature = (text, pixel_spacing_mm = 0.175))]
fn parse_manifest<'py>(py: Python<'py>, text: &str, pixel_spacing_mm: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = DatasetConfig {
        pixel_spacing_mm,
        ..DatasetConfig::default()
    };
    let records = dataset::parse_manifest(text, &cfg).map_err(err)?;
    records.iter().map(|r| record_dict(py, r)).collect()
}

/// Draws a visual prompt (`none`, `crop`, `circle`, `arrow`, `contour`)
/// for a nodule at (x, y) with the given diameter.
#[pyfunction]
#[pyo3(signature = (image, kind, x, y, diameter_px, mask = None, stroke_width_px = 8, scale_factor = 5.0))]
#[allow(clippy::too_many_arguments)]
fn draw_marker(
    image: &PyImage,
    kind: &str,
    x: u32,
    y: u32,
    diameter_px: f64,
    mask: Option<PyImage>,
    stroke_width_px: u32,
    scale_factor: f64,
) -> PyResult<PyImage> {
    let kind: MarkerKind = kind.parse().map_err(err)?;
    let spec = MarkerSpec {
        kind,
        stroke_width_px,
        scale_factor,
        ..MarkerSpec::default()
    };
    let rec = NoduleRecord {
        image_id: "python".into(),
        x_px: x,
        y_px: y,
        diameter_px,
        label: Label::Benign,
    };
    let out = marker::apply_marker(&image.inner, &rec, &spec, mask.as_ref().map(|m| &m.inner)).map_err(err)?;
    Ok(PyImage { inner: out })
}

/// Marching-squares contours of a binary mask as lists of (x, y) vertices.
#[pyfunction]
fn extract_contour(mask: &PyImage) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let polys = marker::extract_contour(&mask.inner).map_err(err)?;
    Ok(polys.into_iter().map(|p| p.vertices).collect())
}

/// Shortest-side bicubic resize, center crop and normalization; returns
/// ((3, side, side), flat CHW values).
#[pyfunction]
#[pyo3(signature = (image, target_side = 224))]
fn preprocess(image: &PyImage, target_side: usize) -> PyResult<((usize, usize, usize), Vec<f32>)> {
    let cfg = PreprocessConfig {
        target_side,
        ..PreprocessConfig::default()
    };
    let t = prep::preprocess(&image.inner, &cfg).map_err(err)?;
    let [c, h, w] = t.dims();
    Ok(((c, h, w), t.data().to_vec()))
}

/// Class prompts, optionally naming the drawn marker.
#[pyfunction]
#[pyo3(signature = (marker = None))]
fn build_prompts(marker: Option<&str>) -> PyResult<Vec<String>> {
    let kind = marker.map(str::parse::<MarkerKind>).transpose().map_err(err)?;
    Ok(zero_shot::default_prompts(kind).map_err(err)?.rendered)
}

/// Softmax over scaled cosine similarities; returns class probabilities.
#[pyfunction]
#[pyo3(signature = (image_embedding, text_embeddings, logit_scale = 100.0))]
fn classify(image_embedding: Vec<f32>, text_embeddings: Vec<Vec<f32>>, logit_scale: f64) -> PyResult<Vec<f64>> {
    let img = EmbeddingVector::normalized(image_embedding).map_err(err)?;
    let text = text_embeddings
        .into_iter()
        .map(EmbeddingVector::normalized)
        .collect::<vprompt::Result<Vec<_>>>()
        .map_err(err)?;
    let cfg = ZeroShotConfig {
        logit_scale: Some(logit_scale),
        ..ZeroShotConfig::default()
    };
    Ok(zero_shot::classify(&img, &text, &cfg).map_err(err)?.probs)
}

/// All headline metrics for binary labels and malignancy scores.
#[pyfunction]
#[pyo3(signature = (labels, scores, threshold = 0.5))]
fn full_report<'py>(py: Python<'py>, labels: Vec<u8>, scores: Vec<f64>, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::full_report(&labels, &scores, threshold).map_err(err)?;
    let d = PyDict::new(py);
    for (name, v) in metrics::MetricsReport::METRIC_NAMES.iter().zip(r.values()) {
        d.set_item(*name, v)?;
    }
    d.set_item("n_pos", r.n_pos)?;
    d.set_item("n_neg", r.n_neg)?;
    d.set_item("zero_denominators", r.zero_denominators.clone())?;
    Ok(d)
}

/// Merges per-layer (heads, tokens, tokens) gradients, given flat, into a
/// normalized P×P heatmap (list of rows).
#[pyfunction]
fn legrad_aggregate(heads: usize, tokens: usize, layers: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f64>>> {
    let grads = AttentionGradients::new(heads, tokens, layers).map_err(err)?;
    let map = legrad::aggregate(&grads);
    Ok(map.values().chunks(map.side()).map(<[f64]>::to_vec).collect())
}

/// Encodes a float32 tensor in the VPT1 wire format.
#[pyfunction]
fn write_tensor<'py>(py: Python<'py>, dims: Vec<u32>, data: Vec<f32>) -> PyResult<Bound<'py, PyBytes>> {
    let t = WireTensor::new(dims, data).map_err(err)?;
    Ok(PyBytes::new(py, &bridge::write_tensor(&t)))
}

/// Decodes VPT1 bytes into (dims, flat values).
#[pyfunction]
fn read_tensor(data: &[u8]) -> PyResult<(Vec<u32>, Vec<f32>)> {
    let t = bridge::read_tensor(data).map_err(err)?;
    Ok((t.dims().to_vec(), t.into_data()))
}

/// Runs the configured grid and returns the grid CSV text. `backend`
/// overrides the config (e.g. "synthetic" or "file:/path").
#[pyfunction]
#[pyo3(signature = (config_path, backend = None))]
fn run_grid(py: Python<'_>, config_path: PathBuf, backend: Option<&str>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::load(&config_path).map_err(err)?;
    if let Some(b) = backend {
        cfg.backend = Some(b.parse::<BackendSpec>().map_err(err)?);
    }
    let spec = cfg
        .backend
        .clone()
        .ok_or_else(|| VpromptError::new_err("no backend configured"))?;
    py.detach(move || {
        let backend: Arc<dyn bridge::Backend> = spec.connect()?;
        let exp = Experiment::new(cfg, backend)?;
        grid_csv(&exp.run_grid())
    })
    .map_err(err)
}

#[pymodule]
fn vprompt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VpromptError", m.py().get_type::<VpromptError>())?;
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(parse_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(draw_marker, m)?)?;
    m.add_function(wrap_pyfunction!(extract_contour, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompts, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(full_report, m)?)?;
    m.add_function(wrap_pyfunction!(legrad_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    Ok(())
}
