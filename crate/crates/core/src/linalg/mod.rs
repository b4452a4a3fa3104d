//! Dense matrix kernels: products, norms, Householder QR, Jacobi SVD and
//! randomized SVD with subspace iteration.

mod io;
mod matrix;
mod qr;
mod rsvd;
mod svd;

pub use io::{
    decode_matrix, encode_matrix, load_matrix, save_matrix, write_atomic, MATRIX_MAGIC, MATRIX_VERSION,
};
#[allow(unused_imports)]
pub(crate) use io::read_u32;
pub use matrix::{frobenius_norm, matmul, relative_error, Matrix};
pub use qr::qr_thin;
pub use rsvd::{randomized_svd, randomized_svd_with, DEFAULT_OVERSAMPLE};
pub use svd::{
    exact_svd, nuclear_norm, singular_values, truncated_reconstruction, SvdFactors, JACOBI_TOL, MAX_SWEEPS,
};
