use super::matrix::Matrix;
use super::qr::qr_thin;
use super::svd::{exact_svd, normalize_signs, SvdFactors};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Extra sketch columns beyond the target rank.
pub const DEFAULT_OVERSAMPLE: usize = 10;

/// Rank-`r` randomized SVD with `niter` rounds of subspace iteration and the
/// default oversampling.
pub fn randomized_svd(w: &Matrix, r: usize, niter: usize, rng: &mut RandomSource) -> Result<SvdFactors> {
    randomized_svd_with(w, r, niter, DEFAULT_OVERSAMPLE, rng)
}

/// Randomized range finder followed by an exact SVD of the projected matrix.
///
/// The sketch `w·Ω` (Ω Gaussian, `r + oversample` columns, capped at
/// `min(m, n)`) is orthonormalized, then refined by `niter` alternating
/// products with `wᵀ` and `w`, re-orthonormalizing after each product.
pub fn randomized_svd_with(
    w: &Matrix,
    r: usize,
    niter: usize,
    oversample: usize,
    rng: &mut RandomSource,
) -> Result<SvdFactors> {
    let (m, n) = w.shape();
    let k = m.min(n);
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={k} for a {m}x{n} matrix"
        )));
    }
    let width = (r + oversample).min(k);

    let omega = rng.normal_matrix(n, width, 1.0);
    let (mut q, _) = qr_thin(&w.matmul(&omega)?)?;
    for _ in 0..niter {
        let (z, _) = qr_thin(&w.t_matmul(&q)?)?;
        q = qr_thin(&w.matmul(&z)?)?.0;
    }

    // w ≈ q·(qᵀw); SVD of the small projected matrix.
    let projected = q.t_matmul(w)?;
    let small = exact_svd(&projected)?;
    let mut u = q.matmul(&small.u)?.columns(0..r);
    let mut v = small.v.columns(0..r);
    normalize_signs(&mut u, &mut v);
    Ok(SvdFactors {
        u,
        s: small.s[..r].to_vec(),
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{relative_error, truncated_reconstruction};

    fn power_law(m: usize, n: usize, alpha: f64, seed: u64) -> Matrix {
        let mut rng = RandomSource::new(seed);
        let k = m.min(n);
        let (u, _) = qr_thin(&rng.normal_matrix(m, k, 1.0)).unwrap();
        let (v, _) = qr_thin(&rng.normal_matrix(n, k, 1.0)).unwrap();
        let s: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-alpha)).collect();
        u.scale_columns(&s).matmul_t(&v).unwrap()
    }

    #[test]
    fn exact_rank_one() {
        let mut rng = RandomSource::new(1);
        let a = rng.normal_matrix(20, 1, 1.0);
        let b = rng.normal_matrix(1, 15, 1.0);
        let w = a.matmul(&b).unwrap();
        let f = randomized_svd(&w, 1, 1, &mut rng).unwrap();
        assert!(relative_error(&f.reconstruct(), &w).unwrap() <= 1e-8);
    }

    #[test]
    fn axis_aligned_diagonal() {
        let mut d = vec![0.0; 40];
        d[..3].copy_from_slice(&[3.0, 2.0, 1.0]);
        let w = Matrix::from_diag(&d);
        let mut rng = RandomSource::new(2);
        let f = randomized_svd(&w, 2, 1, &mut rng).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12);
        assert!((f.s[1] - 2.0).abs() < 1e-12);
        assert!(f.u.column(0)[0].abs() > 1.0 - 1e-12);
    }

    #[test]
    fn more_iterations_help() {
        let w = power_law(64, 64, 1.0, 5);
        let exact = truncated_reconstruction(&w, 16).unwrap();
        let err = |niter| {
            let mut rng = RandomSource::new(77);
            let f = randomized_svd(&w, 16, niter, &mut rng).unwrap();
            f.reconstruct().sub(&exact).unwrap().frobenius_norm()
        };
        assert!(err(16) <= err(1));
    }

    #[test]
    fn rank_out_of_range() {
        let mut rng = RandomSource::new(0);
        let w = Matrix::identity(4);
        assert!(randomized_svd(&w, 0, 1, &mut rng).is_err());
        assert!(randomized_svd(&w, 5, 1, &mut rng).is_err());
    }

    #[test]
    fn rectangular_shapes() {
        for &(m, n) in &[(30, 12), (12, 30)] {
            let w = power_law(m, n, 0.5, 8);
            let mut rng = RandomSource::new(3);
            let f = randomized_svd(&w, 4, 4, &mut rng).unwrap();
            assert_eq!(f.u.shape(), (m, 4));
            assert_eq!(f.v.shape(), (n, 4));
            let exact = crate::linalg::exact_svd(&w).unwrap();
            for i in 0..4 {
                assert!((f.s[i] - exact.s[i]).abs() < 1e-6 * exact.s[0]);
            }
        }
    }
}
