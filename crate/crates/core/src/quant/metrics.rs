use serde::Serialize;

use super::nf4::{dequantize, quantize, QuantConfig};
use crate::adapter::{merge, DecomposedLayer, Origin};
use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, Matrix};

/// Nuclear norm of direct quantization error, `‖w − nf4(w)‖_*`.
pub fn qlora_error(w: &Matrix, cfg: &QuantConfig) -> Result<f64> {
    nuclear_norm(&w.sub(&dequantize(&quantize(w, cfg)))?)
}

/// Nuclear and Frobenius norms of `w − merge(layer)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerError {
    pub nuclear: f64,
    pub frobenius: f64,
}

pub fn layer_error(w: &Matrix, layer: &DecomposedLayer) -> Result<LayerError> {
    let diff = w.sub(&merge(layer))?;
    Ok(LayerError {
        nuclear: nuclear_norm(&diff)?,
        frobenius: diff.frobenius_norm(),
    })
}

/// `(1 − method_error / qlora_error) × 100`
pub fn reduction_ratio(method_error: f64, qlora_error: f64) -> Result<f64> {
    if !(qlora_error > 0.0) {
        return Err(Error::Undefined {
            what: "error reduction ratio",
            reason: format!("direct quantization error is {qlora_error}"),
        });
    }
    Ok((1.0 - method_error / qlora_error) * 100.0)
}

/// Percentage by which `layer` reduces the nuclear quantization error
/// relative to quantizing `w` directly. Positive is better than direct
/// quantization.
pub fn error_reduction_ratio(w: &Matrix, layer: &DecomposedLayer, cfg: &QuantConfig) -> Result<f64> {
    let baseline = qlora_error(w, cfg)?;
    reduction_ratio(layer_error(w, layer)?.nuclear, baseline)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantReport {
    pub method: Origin,
    pub rank: usize,
    pub iters: usize,
    pub block_size: usize,
    pub nuclear_error: f64,
    pub frobenius_error: f64,
    pub reduction_ratio_percent: f64,
}

impl QuantReport {
    /// Builds a report for `layer`. `qlora_error` may be supplied when
    /// already known for `w` to avoid recomputing it.
    pub fn measure(
        w: &Matrix,
        layer: &DecomposedLayer,
        iters: usize,
        cfg: &QuantConfig,
        qlora_error: Option<f64>,
    ) -> Result<Self> {
        let baseline = match qlora_error {
            Some(e) => e,
            None => self::qlora_error(w, cfg)?,
        };
        let err = layer_error(w, layer)?;
        Ok(Self {
            method: layer.origin(),
            rank: layer.rank(),
            iters,
            block_size: cfg.block_size,
            nuclear_error: err.nuclear,
            frobenius_error: err.frobenius,
            reduction_ratio_percent: reduction_ratio(err.nuclear, baseline)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{qlora_init, qpissa_init};
    use crate::rng::RandomSource;
    use crate::linalg::exact_svd;

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(reduction_ratio(1.0, 2.0).unwrap(), 50.0);
        assert_eq!(reduction_ratio(2.0, 2.0).unwrap(), 0.0);
        assert!(matches!(reduction_ratio(1.0, 0.0), Err(Error::Undefined { .. })));
    }

    #[test]
    fn qlora_baseline_is_exactly_zero() {
        let cfg = QuantConfig::default();
        for seed in 0..3 {
            let w = RandomSource::new(seed).normal_matrix(20, 24, 0.1);
            let layer = qlora_init(&w, 4, &cfg, &mut RandomSource::new(seed + 100)).unwrap();
            assert_eq!(error_reduction_ratio(&w, &layer, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_grid_gives_zero_error() {
        // one block whose entries sit on scaled codebook levels
        let cfg = QuantConfig::new(16).unwrap();
        let levels = cfg.codebook.levels();
        let w = Matrix::from_fn(4, 4, |i, j| 2.0 * levels[i * 4 + j]);
        assert_eq!(qlora_error(&w, &cfg).unwrap(), 0.0);
        let layer = qlora_init(&w, 1, &cfg, &mut RandomSource::new(0)).unwrap();
        assert!(error_reduction_ratio(&w, &layer, &cfg).is_err());
    }

    #[test]
    fn qlora_error_matches_svd_oracle() {
        let cfg = QuantConfig::default();
        let w = crate::harness::generate_spectral_matrix(40, 30, 1.0, 3).unwrap();
        let e = w.sub(&dequantize(&quantize(&w, &cfg))).unwrap();
        let oracle: f64 = exact_svd(&e).unwrap().s.iter().sum();
        assert!((qlora_error(&w, &cfg).unwrap() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn report_fields() {
        let cfg = QuantConfig::default();
        let w = crate::harness::generate_spectral_matrix(32, 32, 1.0, 9).unwrap();
        let layer = qpissa_init(&w, 4, 2, &cfg).unwrap();
        let rep = QuantReport::measure(&w, &layer, 2, &cfg, None).unwrap();
        assert_eq!(rep.method, Origin::Qpissa);
        assert_eq!(rep.rank, 4);
        assert!(rep.reduction_ratio_percent > 0.0);
        assert!(rep.nuclear_error >= rep.frobenius_error);
    }
}
