//! Request/response frames exchanged with model backends.
//!
//! Every message travels as a frame: `u32` little-endian body length
//! followed by the body.
//!
//! ```text
//! request  = op:u8  meta_len:u32  meta:utf8[meta_len]  [tensor:VPT1]
//! response = 0x00 { len:u32 tensor:VPT1[len] }*
//!          | 0x01 len:u32 message:utf8[len]
//! ```

use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};

use crate::bridge::wire::{read_tensor, read_tensor_prefix, WireTensor};
use crate::error::{Error, Result};

pub const STATUS_OK: u8 = 0x00;
pub const STATUS_ERROR: u8 = 0x01;
pub const MAX_FRAME_BYTES: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    EmbedImage = 0x01,
    EmbedText = 0x02,
    AttnGrads = 0x03,
    SegmentBox = 0x04,
    ModelInfo = 0x05,
}

impl Op {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => Op::EmbedImage,
            0x02 => Op::EmbedText,
            0x03 => Op::AttnGrads,
            0x04 => Op::SegmentBox,
            0x05 => Op::ModelInfo,
            other => return Err(Error::protocol(format!("unknown op 0x{other:02x}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::EmbedImage => "embed_image",
            Op::EmbedText => "embed_text",
            Op::AttnGrads => "attn_grads",
            Op::SegmentBox => "segment_box",
            Op::ModelInfo => "model_info",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub op: Op,
    pub metadata: String,
    pub tensor: Option<WireTensor>,
}

impl Request {
    pub fn new(op: Op, metadata: impl Into<String>, tensor: Option<WireTensor>) -> Self {
        Self {
            op,
            metadata: metadata.into(),
            tensor,
        }
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let meta = self.metadata.as_bytes();
        let mut out = Vec::with_capacity(5 + meta.len() + self.tensor.as_ref().map_or(0, |t| t.encoded_len()));
        out.push(self.op as u8);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta);
        if let Some(t) = &self.tensor {
            t.encode_into(&mut out);
        }
        out
    }

    pub fn decode_body(body: &[u8]) -> Result<Self> {
        if body.len() < 5 {
            return Err(Error::protocol("request shorter than its header"));
        }
        let op = Op::from_byte(body[0])?;
        let meta_len = u32::from_le_bytes([body[1], body[2], body[3], body[4]]) as usize;
        let meta_end = 5usize
            .checked_add(meta_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::protocol("metadata runs past the frame"))?;
        let metadata = std::str::from_utf8(&body[5..meta_end])
            .map_err(|e| Error::protocol(format!("metadata is not UTF-8: {e}")))?
            .to_string();
        let rest = &body[meta_end..];
        let tensor = if rest.is_empty() {
            None
        } else {
            Some(read_tensor(rest)?)
        };
        Ok(Self {
            op,
            metadata,
            tensor,
        })
    }

    /// Content address of the request: lowercase hex SHA-256 of its body.
    pub fn key(&self) -> String {
        hex::encode(Sha256::digest(self.encode_body()))
    }

    /// Short human-readable description used in fixture indexes.
    pub fn describe(&self) -> String {
        let mut s = self.op.name().to_string();
        if !self.metadata.is_empty() {
            s.push(' ');
            s.push_str(&self.metadata);
        }
        if let Some(t) = &self.tensor {
            let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
            s.push_str(&format!(" [{}]", dims.join("x")));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Ok(Vec<WireTensor>),
    Error(String),
}

impl Response {
    pub fn encode_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Response::Ok(tensors) => {
                out.push(STATUS_OK);
                for t in tensors {
                    out.extend_from_slice(&(t.encoded_len() as u32).to_le_bytes());
                    t.encode_into(&mut out);
                }
            }
            Response::Error(msg) => {
                out.push(STATUS_ERROR);
                out.extend_from_slice(&(msg.len() as u32).to_le_bytes());
                out.extend_from_slice(msg.as_bytes());
            }
        }
        out
    }

    pub fn decode_body(body: &[u8]) -> Result<Self> {
        let (&status, mut rest) = body
            .split_first()
            .ok_or_else(|| Error::protocol("empty response frame"))?;
        let take_len = |rest: &[u8]| -> Result<usize> {
            rest.get(..4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
                .ok_or_else(|| Error::protocol("truncated length prefix"))
        };
        match status {
            STATUS_OK => {
                let mut tensors = Vec::new();
                while !rest.is_empty() {
                    let len = take_len(rest)?;
                    let chunk = rest
                        .get(4..4 + len)
                        .ok_or_else(|| Error::protocol("tensor runs past the frame"))?;
                    let (t, used) = read_tensor_prefix(chunk)?;
                    if used != len {
                        return Err(Error::protocol("tensor length prefix disagrees with its header"));
                    }
                    tensors.push(t);
                    rest = &rest[4 + len..];
                }
                Ok(Response::Ok(tensors))
            }
            STATUS_ERROR => {
                let len = take_len(rest)?;
                let msg = rest
                    .get(4..4 + len)
                    .ok_or_else(|| Error::protocol("error message runs past the frame"))?;
                Ok(Response::Error(String::from_utf8_lossy(msg).into_owned()))
            }
            other => Err(Error::protocol(format!("unknown status 0x{other:02x}"))),
        }
    }

    pub fn into_result(self) -> Result<Vec<WireTensor>> {
        match self {
            Response::Ok(t) => Ok(t),
            Response::Error(msg) => Err(Error::Backend(msg)),
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<()> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(Error::protocol(format!("{}-byte frame exceeds limit", body.len())));
    }
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::protocol(format!("{len}-byte frame exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::protocol("stream ended inside a frame"),
        _ => e.into(),
    })?;
    Ok(Some(body))
}
