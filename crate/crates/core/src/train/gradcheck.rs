//! Central-difference verification of the analytic model gradients.

use serde::Serialize;

use super::model::MlpModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Distance by which hidden pre-activations sitting on the rectifier kink are
/// moved before differencing.
pub const KINK_SHIFT: f64 = 1e-3;
/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;
const MAX_KINK_PASSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Entries compared.
    pub checked: usize,
    /// Entries whose ±eps perturbation flips a rectifier.
    pub skipped: usize,
    /// Input rows nudged off a kink before differencing.
    pub perturbed_inputs: usize,
}

fn relu_mask(model: &MlpModel, x: &Matrix) -> Result<Vec<bool>> {
    Ok(model.layer1.forward(x)?.as_slice().iter().map(|&z| z > 0.0).collect())
}

/// Moves each input row whose hidden pre-activation lies within
/// [`KINK_SHIFT`] of zero along the corresponding weight column until that
/// pre-activation is `KINK_SHIFT` away. Returns the nudged input and the
/// number of nudges.
fn nudge_off_kinks(model: &MlpModel, x: &Matrix) -> Result<(Matrix, usize)> {
    let w = model.layer1.weight().effective();
    let h = w.cols();
    let mut x = x.clone();
    let mut nudges = 0;
    for _ in 0..MAX_KINK_PASSES {
        let pre = model.layer1.forward(&x)?;
        let mut moved = false;
        for i in 0..x.rows() {
            for j in 0..h {
                let z = pre[(i, j)];
                if z.abs() >= KINK_SHIFT {
                    continue;
                }
                let col = w.column(j);
                let norm2: f64 = col.iter().map(|v| v * v).sum();
                if norm2 == 0.0 {
                    continue;
                }
                let delta = if z >= 0.0 { KINK_SHIFT } else { -KINK_SHIFT };
                let step = (delta - z) / norm2;
                let cols = x.cols();
                for (xv, wv) in x.as_mut_slice()[i * cols..(i + 1) * cols].iter_mut().zip(&col) {
                    *xv += step * wv;
                }
                nudges += 1;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    Ok((x, nudges))
}

/// Compares analytic gradients of every trainable weight tensor (adapter
/// factors for adapted layers, full weights for dense ones; biases excluded)
/// against central differences with step `eps`.
pub fn gradcheck(model: &MlpModel, x: &Matrix, labels: &[usize], eps: f64) -> Result<GradcheckReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {eps}")));
    }
    let (x, perturbed_inputs) = nudge_off_kinks(model, x)?;
    let (_, grads) = model.forward_backward(&x, labels)?;
    let mask0 = relu_mask(model, &x)?;
    let analytic: Vec<Matrix> = grads.layer1.weight.iter().chain(&grads.layer2.weight).cloned().collect();

    let mut work = model.clone();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        perturbed_inputs,
    };
    let n_weight1 = grads.layer1.weight.len();
    for (t, g) in analytic.iter().enumerate() {
        for k in 0..g.as_slice().len() {
            let original = tensor(&mut work, t, n_weight1).as_slice()[k];
            tensor(&mut work, t, n_weight1).as_mut_slice()[k] = original + eps;
            let plus = work.loss(&x, labels)?;
            let mask_plus = relu_mask(&work, &x)?;
            tensor(&mut work, t, n_weight1).as_mut_slice()[k] = original - eps;
            let minus = work.loss(&x, labels)?;
            let mask_minus = relu_mask(&work, &x)?;
            tensor(&mut work, t, n_weight1).as_mut_slice()[k] = original;
            if mask_plus != mask0 || mask_minus != mask0 {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = g.as_slice()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// The `t`-th weight tensor across both layers, biases skipped.
fn tensor(model: &mut MlpModel, t: usize, n_weight1: usize) -> &mut Matrix {
    let mut params = if t < n_weight1 {
        model.layer1.trainable_mut()
    } else {
        model.layer2.trainable_mut()
    };
    let idx = if t < n_weight1 { t } else { t - n_weight1 };
    params.swap_remove(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{lora_init, pissa_init};
    use crate::rng::RandomSource;
    use crate::train::model::{Linear, Weight};

    #[test]
    fn generic_adapted_model() {
        let mut rng = RandomSource::new(11);
        let base = MlpModel::random(6, 5, 4, &mut rng);
        let model = base.inject_with(|w| pissa_init(w, 2)).unwrap();
        let x = rng.normal_matrix(3, 6, 1.0);
        let rep = gradcheck(&model, &x, &[0, 3, 1], 1e-5).unwrap();
        assert!(rep.max_rel_error <= 1e-4, "{rep:?}");
        assert_eq!(rep.checked + rep.skipped, 6 * 2 + 2 * 5 + 5 * 2 + 2 * 4);
    }

    #[test]
    fn linear_region_is_tight() {
        let mut rng = RandomSource::new(12);
        let w1 = rng.normal_matrix(4, 3, 0.3);
        let l1 = Linear::new(Weight::Dense(w1), vec![10.0; 3]).unwrap();
        let l2 = Linear::new(Weight::Dense(rng.normal_matrix(3, 3, 0.5)), vec![0.0; 3]).unwrap();
        let mut lrng = RandomSource::new(13);
        let model = MlpModel::new(l1, l2)
            .unwrap()
            .inject_with(|w| lora_init(w, 2, &mut lrng))
            .unwrap();
        let x = rng.normal_matrix(3, 4, 1.0);
        let rep = gradcheck(&model, &x, &[0, 1, 2], 1e-5).unwrap();
        assert!(rep.max_rel_error <= 1e-8, "{rep:?}");
        assert_eq!(rep.skipped, 0);
        assert_eq!(rep.perturbed_inputs, 0);
    }

    #[test]
    fn kink_inputs_are_flagged() {
        // second hidden unit has pre-activation exactly 0 for the first sample
        let w1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.5, -1.0]]).unwrap();
        let l1 = Linear::new(Weight::Dense(w1), vec![0.0, 0.0]).unwrap();
        let l2 = Linear::new(
            Weight::Dense(Matrix::from_rows(&[vec![1.0, -1.0], vec![0.3, 0.7]]).unwrap()),
            vec![0.0, 0.0],
        )
        .unwrap();
        let model = MlpModel::new(l1, l2).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap();
        assert_eq!(model.layer1().forward(&x).unwrap()[(0, 1)], 0.0);
        let rep = gradcheck(&model, &x, &[0, 1], 1e-5).unwrap();
        assert!(rep.perturbed_inputs >= 1, "{rep:?}");
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
    }

    #[test]
    fn tiny_preactivation_is_skipped_or_moved() {
        let w1 = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let l1 = Linear::new(Weight::Dense(w1), vec![1e-12]).unwrap();
        let l2 = Linear::new(Weight::Dense(Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap()), vec![0.0, 0.0]).unwrap();
        let model = MlpModel::new(l1, l2).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let rep = gradcheck(&model, &x, &[0], 1e-5).unwrap();
        assert!(rep.perturbed_inputs + rep.skipped >= 1);
        assert!(gradcheck(&model, &x, &[0], 0.0).is_err());
    }
}
