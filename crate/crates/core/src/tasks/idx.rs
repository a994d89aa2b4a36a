//! Reader for the IDX tensor format used by the MNIST distribution.
//!
//! Layout: two zero bytes, a type code (`0x08` = unsigned byte), the number
//! of dimensions, one big-endian `u32` per dimension, then the payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Batch;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Idx {
            offset: bytes.len(),
            reason: "truncated magic number".into(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Idx {
            offset: 0,
            reason: format!("bad magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3]),
        });
    }
    if bytes[2] != 0x08 {
        return Err(Error::Idx {
            offset: 2,
            reason: format!("unsupported element type 0x{:02x} (only unsigned bytes)", bytes[2]),
        });
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::Idx {
            offset: 3,
            reason: "zero dimensions".into(),
        });
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let Some(chunk) = bytes.get(off..off + 4) else {
            return Err(Error::Idx {
                offset: bytes.len(),
                reason: format!("truncated size of dimension {d}"),
            });
        };
        dims.push(u32::from_be_bytes(chunk.try_into().unwrap()) as usize);
    }
    let header = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx {
            offset: 4,
            reason: "dimension product overflows".into(),
        })?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::Idx {
            offset: bytes.len(),
            reason: format!("payload truncated: expected {expected} bytes, found {}", payload.len()),
        });
    }
    if payload.len() > expected {
        return Err(Error::Idx {
            offset: header + expected,
            reason: format!("{} trailing bytes after payload", payload.len() - expected),
        });
    }
    Ok(IdxTensor {
        dims,
        data: payload.to_vec(),
    })
}

/// Pairs an image tensor (`n × h × w`) with a label vector (`n`) into a
/// batch with pixel values scaled to `[0, 1]`.
pub fn idx_to_batch(images: &IdxTensor, labels: &IdxTensor) -> Result<Batch> {
    if images.dims.len() < 2 || labels.dims.len() != 1 || images.dims[0] != labels.dims[0] {
        return Err(Error::InvalidArgument(format!(
            "incompatible image dims {:?} and label dims {:?}",
            images.dims, labels.dims
        )));
    }
    let dim: usize = images.dims[1..].iter().product();
    Batch::classification(
        dim,
        images.data.iter().map(|&b| b as f64 / 255.0).collect(),
        labels.data.iter().map(|&b| b as usize).collect(),
    )
}
