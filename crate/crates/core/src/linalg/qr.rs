use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Thin QR by Householder reflections: `m = q · r` with `q` (rows×cols)
/// orthonormal and `r` (cols×cols) upper triangular with a non-negative
/// diagonal.
///
/// A column that is exactly zero below the diagonal at its step gets the
/// identity in place of a reflector, so `q` stays orthonormal and the
/// corresponding `r` diagonal entry is zero. No pivoting.
pub fn qr_thin(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::shape(
            "qr_thin",
            format!("need rows >= cols, got {rows}x{cols}"),
        ));
    }

    // Column-major working copy; column k of `a` holds the k-th column.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(cols);

    for k in 0..cols {
        let x = &a[k][k..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            reflectors.push(None);
            continue;
        }
        for col in a.iter_mut().skip(k) {
            apply_reflector(&v, vnorm2, &mut col[k..]);
        }
        reflectors.push(Some(v));
    }

    let mut r = Matrix::zeros(cols, cols);
    for (j, col) in a.iter().enumerate() {
        for i in 0..=j {
            r[(i, j)] = col[i];
        }
    }

    // Accumulate q = H_0 · H_1 ⋯ H_{n-1} · [I; 0] by applying reflectors in reverse.
    let mut q_cols: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; rows];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, refl) in reflectors.iter().enumerate().rev() {
        if let Some(v) = refl {
            let vnorm2: f64 = v.iter().map(|t| t * t).sum();
            for col in &mut q_cols {
                apply_reflector(v, vnorm2, &mut col[k..]);
            }
        }
    }

    // Non-negative diagonal of r.
    for k in 0..cols {
        if r[(k, k)] < 0.0 {
            for j in k..cols {
                r[(k, j)] = -r[(k, j)];
            }
            for v in &mut q_cols[k] {
                *v = -*v;
            }
        }
    }

    let q = Matrix::from_fn(rows, cols, |i, j| q_cols[j][i]);
    Ok((q, r))
}

/// `x ← (I − 2 v vᵀ / vᵀv) x`
#[inline]
fn apply_reflector(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let s = 2.0 * super::matrix::dot(v, x) / vnorm2;
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_error;
    use crate::rng::RandomSource;

    fn orthonormality_defect(q: &Matrix) -> f64 {
        let g = q.t_matmul(q).unwrap();
        g.sub(&Matrix::identity(q.cols())).unwrap().max_abs()
    }

    #[test]
    fn normalizes_single_column() {
        let m = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let (q, r) = qr_thin(&m).unwrap();
        assert!((q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((r[(0, 0)] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_input_is_fixed_point() {
        let mut rng = RandomSource::new(11);
        let (basis, _) = qr_thin(&rng.normal_matrix(7, 3, 1.0)).unwrap();
        let (q, r) = qr_thin(&basis).unwrap();
        assert!(relative_error(&q, &basis).unwrap() < 1e-12);
        assert!(r.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn random_tall_matrix() {
        let mut rng = RandomSource::new(3);
        let m = rng.normal_matrix(8, 3, 1.0);
        let (q, r) = qr_thin(&m).unwrap();
        assert!(orthonormality_defect(&q) < 1e-10);
        assert!(relative_error(&q.matmul(&r).unwrap(), &m).unwrap() < 1e-10);
        for i in 0..3 {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn zero_column_keeps_q_orthonormal() {
        let mut m = RandomSource::new(5).normal_matrix(6, 3, 1.0);
        for i in 0..6 {
            m[(i, 1)] = 0.0;
        }
        let (q, r) = qr_thin(&m).unwrap();
        assert!(orthonormality_defect(&q) < 1e-12);
        assert_eq!(r[(1, 1)], 0.0);
        assert!(relative_error(&q.matmul(&r).unwrap(), &m).unwrap() < 1e-12);
    }

    #[test]
    fn wide_input_rejected() {
        assert!(qr_thin(&Matrix::zeros(2, 3)).is_err());
    }
}
