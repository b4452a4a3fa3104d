//! Initializations over an NF4-quantized base.

use super::nf4::{dequantize, quantize, QuantConfig, QuantizedMatrix};
use crate::adapter::{lora_std, split_window, AdapterPair, Base, DecomposedLayer, Origin};
use crate::error::{Error, Result};
use crate::linalg::{exact_svd, Matrix};
use crate::rng::RandomSource;

fn check(w: &Matrix, r: usize, iters: usize) -> Result<()> {
    let k = w.rows().min(w.cols());
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={k}")));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    Ok(())
}

/// Rank-`r` principal factors `(A, B)` of `m`.
fn principal_factors(m: &Matrix, r: usize) -> Result<(Matrix, Matrix)> {
    let svd = exact_svd(m)?;
    Ok(split_window(&svd, 0..r))
}

/// `‖w − (dequantize(q) + A·B)‖_F`
fn objective(w: &Matrix, q: &QuantizedMatrix, a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(w.sub(&dequantize(q))?.sub(&a.matmul(b)?)?.frobenius_norm())
}

/// Result of an alternating initialization, with the Frobenius objective
/// after each of its `T` rounds.
#[derive(Clone, Debug)]
pub struct AlternatingInit {
    pub layer: DecomposedLayer,
    pub objectives: Vec<f64>,
}

fn finish(q: QuantizedMatrix, a: Matrix, b: Matrix, origin: Origin, objectives: Vec<f64>) -> Result<AlternatingInit> {
    let layer = DecomposedLayer::new(Base::quantized(q), AdapterPair::new(a, b, 1.0)?, origin)?;
    Ok(AlternatingInit { layer, objectives })
}

/// QLoRA: quantize `w` directly and attach a Gaussian-zero adapter.
pub fn qlora_init(w: &Matrix, r: usize, cfg: &QuantConfig, rng: &mut RandomSource) -> Result<DecomposedLayer> {
    check(w, r, 1)?;
    let a = rng.normal_matrix(w.rows(), r, lora_std(r));
    let b = Matrix::zeros(r, w.cols());
    DecomposedLayer::new(Base::quantized(quantize(w, cfg)), AdapterPair::new(a, b, 1.0)?, Origin::Qlora)
}

/// QPiSSA with `iters` alternating rounds.
///
/// Round 1 takes the principal factors of `w` and quantizes the residual
/// `w − A·B`. Each further round refits `(A, B)` as the principal factors of
/// `w − nf4(residual)` and re-quantizes `w − A·B`.
pub fn qpissa_init(w: &Matrix, r: usize, iters: usize, cfg: &QuantConfig) -> Result<DecomposedLayer> {
    Ok(qpissa_init_traced(w, r, iters, cfg)?.layer)
}

pub fn qpissa_init_traced(w: &Matrix, r: usize, iters: usize, cfg: &QuantConfig) -> Result<AlternatingInit> {
    check(w, r, iters)?;
    let (mut a, mut b) = principal_factors(w, r)?;
    let mut q = quantize(&w.sub(&a.matmul(&b)?)?, cfg);
    let mut objectives = vec![objective(w, &q, &a, &b)?];
    for _ in 1..iters {
        (a, b) = principal_factors(&w.sub(&dequantize(&q))?, r)?;
        q = quantize(&w.sub(&a.matmul(&b)?)?, cfg);
        objectives.push(objective(w, &q, &a, &b)?);
    }
    finish(q, a, b, Origin::Qpissa, objectives)
}

/// LoftQ with `iters` alternating rounds.
///
/// Starting from a zero adapter, each round quantizes `w − A·B` and then sets
/// `(A, B)` to the rank-`r` truncated SVD of the quantization error
/// `w − nf4(w − A·B)`.
pub fn loftq_init(w: &Matrix, r: usize, iters: usize, cfg: &QuantConfig) -> Result<DecomposedLayer> {
    Ok(loftq_init_traced(w, r, iters, cfg)?.layer)
}

pub fn loftq_init_traced(w: &Matrix, r: usize, iters: usize, cfg: &QuantConfig) -> Result<AlternatingInit> {
    check(w, r, iters)?;
    let mut q = quantize(w, cfg);
    let (mut a, mut b) = principal_factors(&w.sub(&dequantize(&q))?, r)?;
    let mut objectives = vec![objective(w, &q, &a, &b)?];
    for _ in 1..iters {
        q = quantize(&w.sub(&a.matmul(&b)?)?, cfg);
        (a, b) = principal_factors(&w.sub(&dequantize(&q))?, r)?;
        objectives.push(objective(w, &q, &a, &b)?);
    }
    finish(q, a, b, Origin::Loftq, objectives)
}
