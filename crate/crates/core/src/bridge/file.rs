//! Offline backend replaying recorded responses from a directory.
//!
//! Layout: one `<key>.vpt` file per request, where `<key>` is the lowercase
//! hex SHA-256 of the request body and the file holds the response tensors
//! back to back, plus `index.json` mapping keys to readable descriptions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bridge::protocol::{Op, Request};
use crate::bridge::wire::{read_tensor_sequence, WireTensor};
use crate::bridge::Backend;
use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    op: String,
    request: String,
}

fn tensor_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.vpt"))
}

pub struct FileBackend {
    dir: PathBuf,
}

impl FileBackend {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }
}

impl Backend for FileBackend {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        let path = tensor_path(&self.dir, &req.key());
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let msg = format!("no recorded response for {}", req.describe());
                return Err(match req.op {
                    Op::SegmentBox | Op::AttnGrads => Error::Capability(msg),
                    _ => Error::Backend(msg),
                });
            }
            Err(e) => return Err(e.into()),
        };
        read_tensor_sequence(&bytes)
    }
}

/// Writes responses in the [`FileBackend`] layout.
pub struct FileStore {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

impl FileStore {
    /// Opens `dir` for recording, keeping any entries already present.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let index_path = dir.join(INDEX_FILE);
        let index = if index_path.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&index_path)?)
                .map_err(|e| Error::format("index", e.to_string()))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self, req: &Request, resp: &[WireTensor]) -> Result<()> {
        let key = req.key();
        let mut bytes = Vec::new();
        for t in resp {
            t.encode_into(&mut bytes);
        }
        std::fs::write(tensor_path(&self.dir, &key), bytes)?;

        let mut index = self.index.lock().expect("index lock poisoned");
        index.insert(
            key,
            IndexEntry {
                op: req.op.name().to_string(),
                request: req.describe(),
            },
        );
        let json = serde_json::to_string_pretty(&*index)
            .map_err(|e| Error::format("index", e.to_string()))?;
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        std::fs::write(&tmp, json + "\n")?;
        std::fs::rename(tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("index lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forwards to a live backend and records every successful response.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    store: FileStore,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, store: FileStore) -> Self {
        Self { inner, store }
    }

    pub fn store(&self) -> &FileStore {
        &self.store
    }
}

impl Backend for RecordingBackend {
    fn call(&self, req: &Request) -> Result<Vec<WireTensor>> {
        let resp = self.inner.call(req)?;
        self.store.record(req, &resp)?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::wire::write_tensor;

    #[test]
    fn stored_fixture_is_returned_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::create(dir.path()).unwrap();
        let req = Request::new(Op::EmbedText, "A chest x-ray", None);
        let t = WireTensor::vector(vec![0.25, -1.5, 3.0]);
        store.record(&req, std::slice::from_ref(&t)).unwrap();

        let on_disk = std::fs::read(dir.path().join(format!("{}.vpt", req.key()))).unwrap();
        assert_eq!(on_disk, write_tensor(&t));
        let index = std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
        assert!(index.contains("embed_text A chest x-ray"));

        let backend = FileBackend::open(dir.path()).unwrap();
        assert_eq!(backend.call(&req).unwrap(), vec![t]);
    }

    #[test]
    fn missing_entries() {
        let dir = tempfile::tempdir().unwrap();
        let backend = FileBackend::open(dir.path()).unwrap();
        assert!(matches!(
            backend.call(&Request::new(Op::EmbedText, "x", None)),
            Err(Error::Backend(_))
        ));
        assert!(matches!(
            backend.call(&Request::new(Op::SegmentBox, "0,0,1,1", None)),
            Err(Error::Capability(_))
        ));
        assert!(FileBackend::open(&dir.path().join("absent")).is_err());
    }

    #[test]
    fn multi_tensor_responses_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::create(dir.path()).unwrap();
        let req = Request::new(Op::AttnGrads, "p", Some(WireTensor::vector(vec![1.0])));
        let layers = vec![
            WireTensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            WireTensor::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap(),
        ];
        store.record(&req, &layers).unwrap();
        assert_eq!(FileBackend::open(dir.path()).unwrap().call(&req).unwrap(), layers);
        // reopening keeps earlier entries
        assert_eq!(FileStore::create(dir.path()).unwrap().len(), 1);
    }
}
