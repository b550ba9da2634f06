//! Server side of the frame protocol, for in-process and test sidecars.

use std::io::{Read, Write};

use crate::bridge::protocol::{read_frame, write_frame, Request, Response};
use crate::bridge::Backend;
use crate::error::Result;

/// Answers one request body. Malformed requests and backend failures both
/// become error frames.
pub fn serve_one(backend: &dyn Backend, body: &[u8]) -> Response {
    match Request::decode_body(body).and_then(|req| backend.call(&req)) {
        Ok(tensors) => Response::Ok(tensors),
        Err(e) => Response::Error(e.to_string()),
    }
}

/// Serves frames until the reader reaches end of stream.
pub fn serve<R: Read, W: Write>(backend: &dyn Backend, mut reader: R, mut writer: W) -> Result<()> {
    while let Some(body) = read_frame(&mut reader)? {
        let resp = serve_one(backend, &body);
        write_frame(&mut writer, &resp.encode_body())?;
    }
    Ok(())
}
