//! Model backends: wire format, request protocol, and the caching client
//! the experiment pipeline talks to.

mod file;
mod protocol;
mod server;
mod sidecar;
mod synthetic;
pub mod wire;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legrad::AttentionGradients;
use crate::marker::BoundingBox;
use crate::preprocess::ImageTensor;
use crate::raster::RasterImage;
use crate::zero_shot::EmbeddingVector;

pub use file::{FileBackend, FileStore, RecordingBackend, INDEX_FILE};
pub use protocol::{read_frame, write_frame, Op, Request, Response};
pub use server::{serve, serve_one};
pub use sidecar::{SidecarBackend, StreamConnection, TcpBackend};
pub use synthetic::SyntheticModel;
pub use wire::{read_tensor, write_tensor, WireTensor};

/// Environment variable holding the sidecar launch command.
pub const SIDECAR_CMD_ENV: &str = "VPROMPT_SIDECAR_CMD";
/// Environment variable forwarded to the sidecar naming the model checkpoint.
pub const MODEL_ID_ENV: &str = "VPROMPT_MODEL_ID";

/// Anything that answers protocol requests.
pub trait Backend: Send + Sync {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        (**self).call(req)
    }
}

/// Parsed `--backend` argument.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    File { dir: PathBuf },
    Sidecar {
        command: Option<String>,
        #[serde(default = "one")]
        connections: usize,
        model_id: Option<String>,
    },
    Tcp {
        address: String,
        #[serde(default = "one")]
        connections: usize,
    },
    Synthetic,
}

fn one() -> usize {
    1
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "file" if !arg.is_empty() => Ok(BackendSpec::File { dir: arg.into() }),
            "sidecar" => Ok(BackendSpec::Sidecar {
                command: (!arg.is_empty()).then(|| arg.to_string()),
                connections: 1,
                model_id: None,
            }),
            "tcp" if !arg.is_empty() => Ok(BackendSpec::Tcp {
                address: arg.to_string(),
                connections: 1,
            }),
            "synthetic" => Ok(BackendSpec::Synthetic),
            _ => Err(Error::config(format!(
                "backend '{s}' must be file:<dir>, sidecar:<cmd>, tcp:<addr> or synthetic"
            ))),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::File { dir } => write!(f, "file:{}", dir.display()),
            BackendSpec::Sidecar { command, .. } => {
                write!(f, "sidecar:{}", command.as_deref().unwrap_or("${VPROMPT_SIDECAR_CMD}"))
            }
            BackendSpec::Tcp { address, .. } => write!(f, "tcp:{address}"),
            BackendSpec::Synthetic => f.write_str("synthetic"),
        }
    }
}

impl BackendSpec {
    pub fn connect(&self) -> Result<Arc<dyn Backend>> {
        Ok(match self {
            BackendSpec::File { dir } => Arc::new(FileBackend::open(dir)?),
            BackendSpec::Sidecar {
                command,
                connections,
                model_id,
            } => {
                let cmd = match command {
                    Some(c) => c.clone(),
                    None => std::env::var(SIDECAR_CMD_ENV).map_err(|_| {
                        Error::config(format!("no sidecar command given and {SIDECAR_CMD_ENV} is unset"))
                    })?,
                };
                Arc::new(SidecarBackend::spawn(&cmd, *connections, model_id.as_deref())?)
            }
            BackendSpec::Tcp {
                address,
                connections,
            } => Arc::new(TcpBackend::connect(address, *connections)?),
            BackendSpec::Synthetic => Arc::new(SyntheticModel::default()),
        })
    }
}

/// Model facts reported by the `model_info` op.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub embed_dim: usize,
    pub logit_scale: f64,
    pub layers: usize,
    pub heads: usize,
    pub tokens: usize,
}

impl ModelInfo {
    pub fn to_tensor(&self) -> WireTensor {
        WireTensor::vector(vec![
            self.embed_dim as f32,
            self.logit_scale as f32,
            self.layers as f32,
            self.heads as f32,
            self.tokens as f32,
        ])
    }

    pub fn from_tensor(t: &WireTensor) -> Result<Self> {
        let d = t.data();
        if t.dims() != [5] || d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::protocol(format!(
                "model_info must be 5 non-negative values, got dims {:?}",
                t.dims()
            )));
        }
        Ok(Self {
            embed_dim: d[0] as usize,
            logit_scale: d[1] as f64,
            layers: d[2] as usize,
            heads: d[3] as usize,
            tokens: d[4] as usize,
        })
    }
}

type Slot = Arc<Mutex<Option<Arc<Vec<WireTensor>>>>>;

/// Typed, caching front end over a [`Backend`].
///
/// Responses are cached by request content, and concurrent identical
/// requests wait on one backend call.
pub struct ModelClient {
    backend: Arc<dyn Backend>,
    cache: Mutex<HashMap<String, Slot>>,
    calls: AtomicU64,
    input_side: usize,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self::with_input_side(backend, 224)
    }

    pub fn with_input_side(backend: Arc<dyn Backend>, input_side: usize) -> Self {
        Self {
            backend,
            cache: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
            input_side,
        }
    }

    /// Number of requests that reached the backend.
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn request(&self, req: &Request) -> Result<Arc<Vec<WireTensor>>> {
        let slot = {
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            cache.entry(req.key()).or_default().clone()
        };
        let mut entry = slot.lock().expect("cache slot poisoned");
        if let Some(hit) = entry.as_ref() {
            return Ok(hit.clone());
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let resp = Arc::new(self.backend.call(req)?);
        *entry = Some(resp.clone());
        Ok(resp)
    }

    fn single(&self, req: &Request) -> Result<WireTensor> {
        let resp = self.request(req)?;
        match resp.as_slice() {
            [t] => Ok(t.clone()),
            other => Err(Error::protocol(format!(
                "{} expects one tensor, got {}",
                req.op.name(),
                other.len()
            ))),
        }
    }

    fn embedding(&self, req: &Request) -> Result<EmbeddingVector> {
        let t = self.single(req)?;
        if t.dims().len() != 1 || t.data().is_empty() {
            return Err(Error::protocol(format!(
                "embedding must be a non-empty vector, got dims {:?}",
                t.dims()
            )));
        }
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::protocol("embedding holds non-finite values"));
        }
        EmbeddingVector::normalized(t.into_data()).map_err(|e| Error::protocol(e.to_string()))
    }

    fn image_tensor(&self, t: &ImageTensor) -> Result<WireTensor> {
        let [c, h, w] = t.dims();
        if h != self.input_side || w != self.input_side {
            return Err(Error::validation(format!(
                "model input must be (3, {s}, {s}), got ({c}, {h}, {w})",
                s = self.input_side
            )));
        }
        WireTensor::new(vec![c as u32, h as u32, w as u32], t.data().to_vec())
    }

    pub fn model_info(&self) -> Result<ModelInfo> {
        ModelInfo::from_tensor(&self.single(&Request::new(Op::ModelInfo, "", None))?)
    }

    pub fn embed_image(&self, t: &ImageTensor) -> Result<EmbeddingVector> {
        let tensor = self.image_tensor(t)?;
        self.embedding(&Request::new(Op::EmbedImage, "", Some(tensor)))
    }

    pub fn embed_text(&self, prompt: &str) -> Result<EmbeddingVector> {
        self.embedding(&Request::new(Op::EmbedText, prompt, None))
    }

    pub fn attention_gradients(&self, t: &ImageTensor, prompt: &str) -> Result<AttentionGradients> {
        let tensor = self.image_tensor(t)?;
        let resp = self.request(&Request::new(Op::AttnGrads, prompt, Some(tensor)))?;
        let first = resp
            .first()
            .ok_or_else(|| Error::protocol("attn_grads returned no layers"))?;
        let dims = first.dims().to_vec();
        if dims.len() != 3 || dims[1] != dims[2] {
            return Err(Error::protocol(format!(
                "attention gradients must be (heads, T, T), got {dims:?}"
            )));
        }
        if let Some(bad) = resp.iter().find(|t| t.dims() != dims.as_slice()) {
            return Err(Error::protocol(format!(
                "inconsistent layer shapes {:?} vs {dims:?}",
                bad.dims()
            )));
        }
        let layers = resp.iter().map(|t| t.data().to_vec()).collect();
        AttentionGradients::new(dims[0] as usize, dims[1] as usize, layers)
            .map_err(|e| Error::protocol(e.to_string()))
    }

    /// Box-prompted segmentation of a native-resolution image.
    pub fn segment_box(&self, img: &RasterImage, bbox: &BoundingBox) -> Result<RasterImage> {
        let (w, h, c) = (img.width(), img.height(), img.channels());
        let mut chw = vec![0.0f32; w * h * c];
        for (i, px) in img.pixels().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                chw[ch * w * h + i] = v;
            }
        }
        let tensor = WireTensor::new(vec![c as u32, h as u32, w as u32], chw)?;
        let mask = self.single(&Request::new(Op::SegmentBox, bbox.to_csv(), Some(tensor)))?;
        let dims = mask.dims();
        let shape_ok = dims == [h as u32, w as u32] || dims == [1, h as u32, w as u32];
        if !shape_ok {
            return Err(Error::protocol(format!(
                "mask dims {dims:?} do not match request {h}x{w}"
            )));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::protocol("mask values must be 0 or 1"));
        }
        RasterImage::new(w, h, 1, mask.into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    /// Serves a fixed response and counts calls.
    struct Canned {
        resp: Vec<WireTensor>,
        hits: AtomicUsize,
    }

    impl Backend for Canned {
        fn call(&self, _req: &Request) -> Result<Vec<WireTensor>> {
            self.hits.fetch_add(1, Ordering::SeqCst);
            Ok(self.resp.clone())
        }
    }

    fn client(resp: Vec<WireTensor>) -> (Arc<Canned>, ModelClient) {
        let b = Arc::new(Canned {
            resp,
            hits: AtomicUsize::new(0),
        });
        (b.clone(), ModelClient::with_input_side(b, 4))
    }

    #[test]
    fn text_cache_is_byte_exact() {
        let (b, c) = client(vec![WireTensor::vector(vec![3.0, 4.0])]);
        let e = c.embed_text("a prompt").unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-3);
        c.embed_text("a prompt").unwrap();
        assert_eq!(b.hits.load(Ordering::SeqCst), 1);
        c.embed_text("a prompt ").unwrap();
        assert_eq!(c.backend_calls(), 2);
    }

    #[test]
    fn image_cache_and_shape_check() {
        let (_, c) = client(vec![WireTensor::vector(vec![1.0, 1.0])]);
        let t = ImageTensor::new(4, 4, vec![0.5; 48]).unwrap();
        c.embed_image(&t).unwrap();
        c.embed_image(&t).unwrap();
        assert_eq!(c.backend_calls(), 1);
        let wrong = ImageTensor::new(5, 5, vec![0.5; 75]).unwrap();
        assert!(matches!(c.embed_image(&wrong), Err(Error::Validation(_))));
    }

    #[test]
    fn non_finite_embedding_is_protocol_error() {
        let (_, c) = client(vec![WireTensor::vector(vec![f32::NAN, 1.0])]);
        assert!(matches!(c.embed_text("x"), Err(Error::Protocol(_))));
    }

    #[test]
    fn gradient_shapes_validated() {
        let t = ImageTensor::new(4, 4, vec![0.0; 48]).unwrap();
        let layer = |tok: u32| WireTensor::new(vec![2, tok, tok], vec![0.1; (2 * tok * tok) as usize]).unwrap();
        let (_, ok) = client(vec![layer(5), layer(5)]);
        assert_eq!(ok.attention_gradients(&t, "p").unwrap().patch_grid(), 2);
        let (_, bad) = client(vec![layer(6)]);
        assert!(matches!(bad.attention_gradients(&t, "p"), Err(Error::Protocol(_))));
        let (_, mixed) = client(vec![layer(5), layer(10)]);
        assert!(matches!(mixed.attention_gradients(&t, "p"), Err(Error::Protocol(_))));
    }

    #[test]
    fn mask_values_validated() {
        let img = RasterImage::filled(3, 2, 1, 0.5).unwrap();
        let bbox = BoundingBox::new(0.0, 0.0, 2.0, 1.0).unwrap();
        let (_, ok) = client(vec![WireTensor::new(vec![2, 3], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap()]);
        let m = ok.segment_box(&img, &bbox).unwrap();
        assert_eq!((m.width(), m.height()), (3, 2));
        let (_, bad) = client(vec![WireTensor::new(vec![2, 3], vec![0.5; 6]).unwrap()]);
        assert!(matches!(bad.segment_box(&img, &bbox), Err(Error::Protocol(_))));
        let (_, wrong) = client(vec![WireTensor::new(vec![3, 2], vec![0.0; 6]).unwrap()]);
        assert!(matches!(wrong.segment_box(&img, &bbox), Err(Error::Protocol(_))));
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!(
            "file:/tmp/x".parse::<BackendSpec>().unwrap(),
            BackendSpec::File { dir: "/tmp/x".into() }
        );
        assert!(matches!(
            "sidecar:python serve.py".parse::<BackendSpec>().unwrap(),
            BackendSpec::Sidecar { command: Some(c), .. } if c == "python serve.py"
        ));
        assert_eq!("synthetic".parse::<BackendSpec>().unwrap(), BackendSpec::Synthetic);
        assert!("file:".parse::<BackendSpec>().is_err());
        assert!("http://x".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn model_info_round_trip() {
        let info = ModelInfo {
            embed_dim: 512,
            logit_scale: 100.0,
            layers: 12,
            heads: 12,
            tokens: 197,
        };
        assert_eq!(ModelInfo::from_tensor(&info.to_tensor()).unwrap(), info);
        assert!(ModelInfo::from_tensor(&WireTensor::vector(vec![1.0])).is_err());
    }
}
