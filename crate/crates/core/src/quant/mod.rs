//! NF4 quantization, quantized-base initializations (QLoRA, LoftQ, QPiSSA),
//! nuclear-norm error metrics and weight-distribution diagnostics.

mod diagnostics;
mod init;
mod io;
mod metrics;
mod nf4;

pub use diagnostics::{distribution_diagnostics, DistributionFit, MAX_FINITE_DOF};
pub use init::{loftq_init, loftq_init_traced, qlora_init, qpissa_init, qpissa_init_traced, AlternatingInit};
pub use io::{decode_quantized, encode_quantized, load_quantized, save_quantized, QUANT_MAGIC, QUANT_VERSION};
pub use metrics::{error_reduction_ratio, layer_error, qlora_error, reduction_ratio, LayerError, QuantReport};
pub use nf4::{
    dequantize, quantize, Nf4Codebook, QuantConfig, QuantizedMatrix, DEFAULT_BLOCK_SIZE, NF4_LEVELS,
};
