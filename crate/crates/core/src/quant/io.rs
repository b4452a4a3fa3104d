//! `PSQ4` quantized-matrix files.
//!
//! Layout (little-endian): magic `b"PSQ4"`, version `u32 = 1`, rows `u32`,
//! cols `u32`, block_size `u32`, one binary64 scale per block, then the packed
//! codes (low nibble holds the earlier element). Files always decode with the
//! standard NormalFloat codebook.

use std::fs;
use std::path::Path;

use super::nf4::{Nf4Codebook, QuantizedMatrix};
use crate::error::{Error, Result};
use crate::linalg::{read_u32, write_atomic};

pub const QUANT_MAGIC: &[u8; 4] = b"PSQ4";
pub const QUANT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
const FMT: &str = "PSQ4";

pub fn encode_quantized(q: &QuantizedMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * q.scales().len() + q.packed_codes().len());
    out.extend_from_slice(QUANT_MAGIC);
    out.extend_from_slice(&QUANT_VERSION.to_le_bytes());
    out.extend_from_slice(&(q.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(q.cols() as u32).to_le_bytes());
    out.extend_from_slice(&(q.block_size() as u32).to_le_bytes());
    for s in q.scales() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(q.packed_codes());
    out
}

pub fn decode_quantized(bytes: &[u8]) -> Result<QuantizedMatrix> {
    if bytes.len() < 4 || &bytes[..4] != QUANT_MAGIC {
        return Err(Error::Format {
            format: FMT,
            offset: 0,
            detail: format!("bad magic {:?}", &bytes[..bytes.len().min(4)]),
        });
    }
    let version = read_u32(bytes, 4, FMT)?;
    if version != QUANT_VERSION {
        return Err(Error::Format {
            format: FMT,
            offset: 4,
            detail: format!("unsupported version {version}, expected {QUANT_VERSION}"),
        });
    }
    let rows = read_u32(bytes, 8, FMT)? as usize;
    let cols = read_u32(bytes, 12, FMT)? as usize;
    let block_size = read_u32(bytes, 16, FMT)? as usize;
    if rows == 0 || cols == 0 || block_size == 0 {
        return Err(Error::Format {
            format: FMT,
            offset: 8,
            detail: format!("zero dimension in header ({rows}x{cols}, block {block_size})"),
        });
    }
    let blocks = (rows * cols).div_ceil(block_size);
    let code_bytes = (blocks * block_size).div_ceil(2);
    let expected = HEADER_LEN + 8 * blocks + code_bytes;
    if bytes.len() != expected {
        return Err(Error::Format {
            format: FMT,
            offset: bytes.len().min(expected),
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let scales_end = HEADER_LEN + 8 * blocks;
    let scales = bytes[HEADER_LEN..scales_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let packed = bytes[scales_end..].to_vec();
    QuantizedMatrix::from_parts(rows, cols, block_size, scales, packed, Nf4Codebook::normal_float()).map_err(
        |e| Error::Format {
            format: FMT,
            offset: HEADER_LEN,
            detail: e.to_string(),
        },
    )
}

pub fn save_quantized(path: impl AsRef<Path>, q: &QuantizedMatrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_quantized(q))
}

pub fn load_quantized(path: impl AsRef<Path>) -> Result<QuantizedMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_quantized(&bytes)
}
