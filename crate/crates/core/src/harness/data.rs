//! Synthetic matrices and datasets, and IDX ingestion.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{qr_thin, Matrix};
use crate::rng::RandomSource;
use crate::train::Dataset;

/// Distance of each cluster centroid from the origin.
pub const CENTROID_SCALE: f64 = 3.0;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// `U·diag(σ)·Vᵀ` with Haar-like orthonormal `U` (m×k), `V` (n×k) and
/// `σ_i = i^−alpha`, `k = min(m, n)`.
pub fn generate_spectral_matrix(m: usize, n: usize, alpha: f64, seed: u64) -> Result<Matrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("spectrum exponent must be finite and >= 0, got {alpha}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("matrix dimensions must be positive, got {m}x{n}")));
    }
    let k = m.min(n);
    let mut rng = RandomSource::new(seed);
    let (u, _) = qr_thin(&rng.normal_matrix(m, k, 1.0))?;
    let (v, _) = qr_thin(&rng.normal_matrix(n, k, 1.0))?;
    let sigma = spectrum(k, alpha);
    u.scale_columns(&sigma).matmul_t(&v)
}

/// `σ_i = i^−alpha` for `i = 1..=k`.
pub fn spectrum(k: usize, alpha: f64) -> Vec<f64> {
    (1..=k).map(|i| (i as f64).powf(-alpha)).collect()
}

/// `per_class` samples for each of `classes` Gaussian clusters. The centroid
/// of class `c` is `CENTROID_SCALE · e_{c mod dim}`. Samples are interleaved
/// by class (`label = i mod classes`).
pub fn generate_cluster_dataset(
    classes: usize,
    dim: usize,
    per_class: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::InvalidArgument("dim and per_class must be positive".into()));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidArgument(format!("noise_std must be finite and >= 0, got {noise_std}")));
    }
    let n = classes * per_class;
    let mut rng = RandomSource::new(seed);
    let mut features = rng.normal_matrix(n, dim, noise_std);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let data = features.as_mut_slice();
    for (i, &c) in labels.iter().enumerate() {
        data[i * dim + c % dim] += CENTROID_SCALE;
    }
    Dataset::new(features, labels, classes)
}

fn idx_err(offset: usize, detail: String) -> Error {
    Error::Format {
        format: "IDX",
        offset,
        detail,
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| idx_err(offset, format!("header truncated: file has {} bytes", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(idx_err(0, format!("expected magic {expected:#010x}, found {found:#010x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    bytes.get(start..start + len).ok_or_else(|| {
        idx_err(
            bytes.len(),
            format!("payload truncated: expected {} bytes, found {}", start + len, bytes.len()),
        )
    })
}

/// Parses an IDX image file into a row-per-image matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let pixels = rows * cols;
    let data = payload(bytes, 16, count * pixels)?;
    Matrix::new(count, pixels, data.iter().map(|&p| f64::from(p) / 255.0).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.iter().map(|&l| usize::from(l)).collect())
}

/// Loads an IDX image/label file pair. The class count is `max(label) + 1`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let features = parse_idx_images(&img)?;
    let labels = parse_idx_labels(&lab)?;
    if labels.len() != features.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, classes)
}
