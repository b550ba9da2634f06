//! `VPT1` tensor wire format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "VPT1"
//! 4       1           dtype (0x01 = f32 little-endian)
//! 5       1           ndim (<= 8)
//! 6       4 * ndim    dims, u32 little-endian
//! ..      4 * prod    payload, row-major
//! ```

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VPT1";
pub const DTYPE_F32: u8 = 0x01;
pub const MAX_NDIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct WireTensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

impl WireTensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > MAX_NDIM {
            return Err(Error::format("ndim", format!("{} exceeds {MAX_NDIM}", dims.len())));
        }
        let expected = element_count(&dims)?;
        if data.len() != expected {
            return Err(Error::format(
                "payload",
                format!("{} values for dims {dims:?} (expected {expected})", data.len()),
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            dims: vec![data.len() as u32],
            data,
        }
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn encoded_len(&self) -> usize {
        6 + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .ok_or_else(|| Error::format("dims", format!("{dims:?} overflow")))
    })
}

pub fn write_tensor(t: &WireTensor) -> Vec<u8> {
    let mut out = Vec::new();
    t.encode_into(&mut out);
    out
}

/// Decodes exactly one tensor; trailing bytes are a length mismatch.
pub fn read_tensor(bytes: &[u8]) -> Result<WireTensor> {
    let (t, used) = read_tensor_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes after tensor", bytes.len() - used),
        ));
    }
    Ok(t)
}

/// Decodes one tensor from the start of `bytes`, returning it and the
/// number of bytes consumed.
pub fn read_tensor_prefix(bytes: &[u8]) -> Result<(WireTensor, usize)> {
    if bytes.len() < 6 {
        return Err(Error::format("header", format!("{} bytes is shorter than a header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format("magic", format!("expected VPT1, got {:02x?}", &bytes[..4])));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::format("dtype", format!("unsupported dtype 0x{:02x}", bytes[4])));
    }
    let ndim = bytes[5] as usize;
    if ndim > MAX_NDIM {
        return Err(Error::format("ndim", format!("{ndim} exceeds {MAX_NDIM}")));
    }
    let dims_end = 6 + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::format("dims", "truncated dimension list"));
    }
    let dims: Vec<u32> = bytes[6..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let count = element_count(&dims)?;
    let end = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(dims_end))
        .ok_or_else(|| Error::format("dims", "payload size overflow"))?;
    if bytes.len() < end {
        return Err(Error::format(
            "payload",
            format!("expected {} payload bytes, got {}", end - dims_end, bytes.len() - dims_end),
        ));
    }
    let data = bytes[dims_end..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((WireTensor { dims, data }, end))
}

/// Decodes back-to-back tensors filling `bytes`.
pub fn read_tensor_sequence(mut bytes: &[u8]) -> Result<Vec<WireTensor>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (t, used) = read_tensor_prefix(bytes)?;
        out.push(t);
        bytes = &bytes[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_header_bytes() {
        let t = WireTensor::new(vec![3, 224, 224], vec![0.0; 3 * 224 * 224]).unwrap();
        let bytes = write_tensor(&t);
        assert_eq!(
            &bytes[..18],
            &[
                b'V', b'P', b'T', b'1', 0x01, 0x03, 0x03, 0, 0, 0, 0xE0, 0, 0, 0, 0xE0, 0, 0, 0
            ]
        );
        assert_eq!(bytes.len(), 18 + 4 * 3 * 224 * 224);
    }

    #[test]
    fn malformed_inputs_name_their_field() {
        let good = write_tensor(&WireTensor::vector(vec![1.0, 2.0]));
        let field = |b: &[u8]| match read_tensor(b) {
            Err(Error::Format { field, .. }) => field,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(field(&good[..good.len() - 1]), "payload");
        let mut extra = good.clone();
        extra.push(0);
        assert_eq!(field(&extra), "payload");
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert_eq!(field(&bad_magic), "magic");
        let mut bad_dtype = good.clone();
        bad_dtype[4] = 0x02;
        assert_eq!(field(&bad_dtype), "dtype");
        let mut bad_ndim = good.clone();
        bad_ndim[5] = 9;
        assert_eq!(field(&bad_ndim), "ndim");
        assert_eq!(field(&good[..8]), "dims");
        assert_eq!(field(&good[..3]), "header");
    }

    #[test]
    fn constructor_checks_length() {
        assert!(WireTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(WireTensor::new(vec![1; 9], vec![0.0]).is_err());
    }

    #[test]
    fn sequence_decoding() {
        let mut bytes = write_tensor(&WireTensor::vector(vec![1.0]));
        bytes.extend(write_tensor(&WireTensor::new(vec![1, 2], vec![2.0, 3.0]).unwrap()));
        let ts = read_tensor_sequence(&bytes).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[1].data(), &[2.0, 3.0]);
    }
}
