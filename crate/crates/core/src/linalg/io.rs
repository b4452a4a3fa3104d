//! `PSSA` matrix files.
//!
//! Layout (all little-endian): magic `b"PSSA"`, format version `u32 = 1`,
//! rows `u32`, cols `u32`, then `rows·cols` binary64 entries, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"PSSA";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn read_u32(bytes: &[u8], offset: usize, format: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format {
            format,
            offset: bytes.len(),
            detail: format!("truncated header: need {} bytes, have {}", offset + 4, bytes.len()),
        })
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    const FMT: &str = "PSSA";
    if bytes.len() < 4 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Format {
            format: FMT,
            offset: 0,
            detail: format!("bad magic {:?}", &bytes[..bytes.len().min(4)]),
        });
    }
    let version = read_u32(bytes, 4, FMT)?;
    if version != MATRIX_VERSION {
        return Err(Error::Format {
            format: FMT,
            offset: 4,
            detail: format!("unsupported version {version}, expected {MATRIX_VERSION}"),
        });
    }
    let rows = read_u32(bytes, 8, FMT)? as usize;
    let cols = read_u32(bytes, 12, FMT)? as usize;
    let expected = HEADER_LEN + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Format {
            format: FMT,
            offset: bytes.len().min(expected),
            detail: format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len()),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::new(rows, cols, data)
}

/// Writes `bytes` to a sibling temp file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(m))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}
