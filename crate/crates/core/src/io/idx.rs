//! IDX tensors (the MNIST distribution format).
//!
//! Header: two zero bytes, a type code, the rank, then one big-endian `u32`
//! per dimension. The payload follows in row-major order. Unsigned bytes
//! (`0x08`) and big-endian `f32` (`0x0D`) are supported.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IDX_UBYTE: u8 = 0x08;
pub const IDX_FLOAT: u8 = 0x0d;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxTensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T> IdxTensor<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of values per item along the first dimension.
    pub fn item_size(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

fn parse_header(bytes: &[u8], type_code: u8, elem_size: usize) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::Idx(format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Idx(format!("bad magic {:02x} {:02x}", bytes[0], bytes[1])));
    }
    if bytes[2] != type_code {
        return Err(Error::Idx(format!("type code 0x{:02x}, expected 0x{type_code:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::Idx(format!("header declares rank {rank} but is truncated")));
    }
    let dims: Vec<usize> =
        bytes[4..header_len].chunks_exact(4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize).collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx("dimension product overflows".into()))?;
    let payload = &bytes[header_len..];
    if payload.len() != count * elem_size {
        return Err(Error::Idx(format!(
            "payload holds {} bytes, dimensions {dims:?} need {}",
            payload.len(),
            count * elem_size
        )));
    }
    Ok((dims, payload))
}

/// Parses an unsigned-byte IDX tensor.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor<u8>> {
    let (dims, payload) = parse_header(bytes, IDX_UBYTE, 1)?;
    Ok(IdxTensor { dims, data: payload.to_vec() })
}

pub fn parse_idx_f32(bytes: &[u8]) -> Result<IdxTensor<f32>> {
    let (dims, payload) = parse_header(bytes, IDX_FLOAT, 4)?;
    let data = payload.chunks_exact(4).map(|b| f32::from_be_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok(IdxTensor { dims, data })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxTensor<u8>> {
    let path = path.as_ref();
    parse_idx(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn header(type_code: u8, dims: &[usize]) -> Result<Vec<u8>> {
    if dims.len() > u8::MAX as usize {
        return Err(Error::Idx(format!("rank {} too large", dims.len())));
    }
    let mut out = vec![0, 0, type_code, dims.len() as u8];
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Idx(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

fn check_count(dims: &[usize], len: usize) -> Result<()> {
    if dims.iter().product::<usize>() != len {
        return Err(Error::Idx(format!("{len} values do not fill dimensions {dims:?}")));
    }
    Ok(())
}

pub fn encode_idx(dims: &[usize], data: &[u8]) -> Result<Vec<u8>> {
    check_count(dims, data.len())?;
    let mut out = header(IDX_UBYTE, dims)?;
    out.extend_from_slice(data);
    Ok(out)
}

pub fn encode_idx_f32(dims: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    check_count(dims, data.len())?;
    let mut out = header(IDX_FLOAT, dims)?;
    for v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}
