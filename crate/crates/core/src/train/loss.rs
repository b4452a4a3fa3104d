use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / b` with respect to the logits.
pub fn cross_entropy_with_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (b, c) = logits.shape();
    if labels.len() != b {
        return Err(Error::shape(
            "cross_entropy_with_grad",
            format!("{b} logit rows but {} labels", labels.len()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{c}")));
    }
    let inv_b = 1.0 / b as f64;
    let mut grad = vec![0.0; b * c];
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        let g = &mut grad[i * c..(i + 1) * c];
        for (gj, z) in g.iter_mut().zip(row) {
            *gj = (z - log_sum).exp() * inv_b;
        }
        g[label] -= inv_b;
    }
    Ok((loss * inv_b, Matrix::from_vec_unchecked(b, c, grad)))
}
