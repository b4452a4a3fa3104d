//! Principal singular value adapter initialization (PiSSA) and its quantized
//! variant, with LoRA / QLoRA / LoftQ baselines, a randomized SVD, NF4 block
//! quantization and a toy fine-tuning harness.
//!
//! Module map:
//! - [`linalg`]: dense kernels, QR, exact and randomized SVD, `PSSA` files
//! - [`adapter`]: adapter initialization, forward/backward, merging and
//!   conversion of a trained adapter to a plain low-rank delta
//! - [`quant`]: NF4 quantization, quantized initializations, error metrics
//! - [`train`]: two-layer MLP, AdamW, cosine schedule, fine-tuning runs
//! - [`harness`]: data generation, IDX ingestion, experiment orchestration

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod quant;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactors};
pub use rng::RandomSource;
