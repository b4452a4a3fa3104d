//! Economy SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Rotations are applied to the columns of the input (or of its transpose when
//! it is wide) until every pair of columns is orthogonal to within
//! [`JACOBI_TOL`] in cosine. Singular values are the final column norms; the
//! accumulated rotations give `V`.

use std::cmp::Ordering;

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Pairwise cosine threshold below which no rotation is applied.
pub const JACOBI_TOL: f64 = 1e-12;

/// Sweep budget before reporting non-convergence.
pub const MAX_SWEEPS: usize = 60;

/// Economy SVD triple `w ≈ u · diag(s) · vᵀ`, singular values descending.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u · diag(s) · vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        self.u
            .scale_columns(&self.s)
            .matmul_t(&self.v)
            .expect("factor shapes are consistent")
    }

    /// Leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdFactors {
        let r = r.min(self.rank());
        SvdFactors {
            u: self.u.columns(0..r),
            s: self.s[..r].to_vec(),
            v: self.v.columns(0..r),
        }
    }

    /// Triplets with indices in `range`, reconstructed as a dense matrix.
    pub fn window(&self, range: std::ops::Range<usize>) -> Matrix {
        let u = self.u.columns(range.clone()).scale_columns(&self.s[range.clone()]);
        u.matmul_t(&self.v.columns(range)).expect("factor shapes are consistent")
    }
}

/// Full economy SVD, `k = min(m, n)` triplets.
///
/// Ties in singular values keep the order of the underlying Jacobi columns.
/// Each `u` column is signed so its largest-magnitude entry is non-negative;
/// the matching `v` column carries the same sign.
pub fn exact_svd(w: &Matrix) -> Result<SvdFactors> {
    if w.rows() >= w.cols() {
        let (u, s, v) = jacobi_tall(w, true)?;
        Ok(assemble(w.rows(), u, s, v.expect("vectors requested")))
    } else {
        let wt = w.transpose();
        let (u, s, v) = jacobi_tall(&wt, true)?;
        // wᵀ = U S Vᵀ  ⇒  w = V S Uᵀ
        let f = assemble(wt.rows(), u, s, v.expect("vectors requested"));
        let mut out = SvdFactors {
            u: f.v,
            s: f.s,
            v: f.u,
        };
        normalize_signs(&mut out.u, &mut out.v);
        Ok(out)
    }
}

/// Singular values only, descending. Skips the `V` accumulation.
pub fn singular_values(w: &Matrix) -> Result<Vec<f64>> {
    let a = if w.rows() >= w.cols() {
        w.clone()
    } else {
        w.transpose()
    };
    let (cols, norms, _) = jacobi_tall(&a, false)?;
    drop(cols);
    let mut s = norms;
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    Ok(s)
}

/// Sum of singular values.
pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Rank-`r` truncation `u_r · diag(s_r) · v_rᵀ` from the exact SVD.
pub fn truncated_reconstruction(w: &Matrix, r: usize) -> Result<Matrix> {
    Ok(exact_svd(w)?.truncate(r).reconstruct())
}

type JacobiOut = (Vec<Vec<f64>>, Vec<f64>, Option<Vec<Vec<f64>>>);

/// One-sided Jacobi on a tall (rows ≥ cols) matrix. Returns the rotated
/// columns, their norms, and optionally the accumulated right rotations
/// (column-major).
fn jacobi_tall(a: &Matrix, want_v: bool) -> Result<JacobiOut> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Option<Vec<Vec<f64>>> = want_v.then(|| {
        (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                e
            })
            .collect()
    });

    let mut converged = n < 2;
    let mut worst = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        worst = 0.0f64;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let cosine = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                if !(cosine > JACOBI_TOL) {
                    continue;
                }
                worst = worst.max(cosine);
                rotated = true;

                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;

                rotate(&mut cols, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    rotate(v, p, q, c, s);
                }
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            routine: "jacobi_svd",
            iterations: MAX_SWEEPS,
            residual: worst,
        });
    }
    let norms = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    Ok((cols, norms, v))
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Sorts Jacobi output, normalizes `u` columns and applies the sign convention.
fn assemble(m: usize, cols: Vec<Vec<f64>>, norms: Vec<f64>, v: Vec<Vec<f64>>) -> SvdFactors {
    let n = cols.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep column order
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(Ordering::Equal));

    let s: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let tiny = smax * f64::EPSILON * (m.max(n) as f64);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let sigma = s[k];
        let mut u = if sigma > tiny && sigma > 0.0 {
            cols[i].iter().map(|x| x / sigma).collect()
        } else {
            vec![0.0; m]
        };
        if !orthogonalize_against(&mut u, &u_cols) {
            u = complete_basis(&u_cols, m);
        }
        u_cols.push(u);
    }

    let mut u = Matrix::from_fn(m, n, |r, c| u_cols[c][r]);
    let mut vm = Matrix::from_fn(n, n, |r, c| v[order[c]][r]);
    normalize_signs(&mut u, &mut vm);
    SvdFactors { u, s, v: vm }
}

/// Two passes of modified Gram-Schmidt, then normalization. Returns false if
/// the vector is (numerically) inside the span of `basis`.
fn orthogonalize_against(u: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = dot(u, u).sqrt();
    if before == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let proj = dot(u, b);
            for (x, y) in u.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
    let after = dot(u, u).sqrt();
    if after < 0.5 * before {
        return false;
    }
    for x in u.iter_mut() {
        *x /= after;
    }
    true
}

/// First standard basis vector that survives projection onto the complement
/// of `basis`.
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        if orthogonalize_against(&mut e, basis) {
            return e;
        }
    }
    unreachable!("fewer than m basis vectors always leave a complement")
}

/// Flips column pairs so that the largest-magnitude entry of each `u` column
/// is non-negative.
pub(crate) fn normalize_signs(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..u.rows() {
            let x = u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_error;
    use crate::rng::RandomSource;

    pub(crate) fn check_factors(w: &Matrix, f: &SvdFactors, tol: f64) {
        let k = w.rows().min(w.cols());
        assert_eq!(f.s.len(), k);
        assert_eq!(f.u.shape(), (w.rows(), k));
        assert_eq!(f.v.shape(), (w.cols(), k));
        for pair in f.s.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        assert!(f.s.iter().all(|&x| x >= 0.0));
        for q in [&f.u, &f.v] {
            let defect = q.t_matmul(q).unwrap().sub(&Matrix::identity(k)).unwrap().max_abs();
            assert!(defect < 1e-8, "orthonormality defect {defect}");
        }
        let err = relative_error(&f.reconstruct(), w).unwrap();
        assert!(err <= tol, "reconstruction error {err}");
    }

    #[test]
    fn identity() {
        let f = exact_svd(&Matrix::identity(3)).unwrap();
        assert_eq!(f.s, vec![1.0, 1.0, 1.0]);
        check_factors(&Matrix::identity(3), &f, 1e-14);
    }

    #[test]
    fn diagonal_gives_signed_permutations() {
        let w = Matrix::from_diag(&[3.0, 2.0, 1.0]);
        let f = exact_svd(&w).unwrap();
        assert_eq!(f.s, vec![3.0, 2.0, 1.0]);
        for q in [&f.u, &f.v] {
            for x in q.as_slice() {
                assert!(x.abs() == 0.0 || x.abs() == 1.0);
            }
        }
        check_factors(&w, &f, 1e-15);
    }

    #[test]
    fn golden_ratio_pair() {
        // eigenvalues of wᵀw are the roots of λ² − 3λ + 1
        let w = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let f = exact_svd(&w).unwrap();
        let l1 = (3.0 + 5f64.sqrt()) / 2.0;
        let l2 = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((f.s[0] - l1.sqrt()).abs() < 1e-14);
        assert!((f.s[1] - l2.sqrt()).abs() < 1e-14);
        assert!((f.s[0] - 1.618_033_988_749_895).abs() < 1e-12);
        assert!((nuclear_norm(&w).unwrap() - (l1.sqrt() + l2.sqrt())).abs() < 1e-14);
        assert!((nuclear_norm(&w).unwrap() - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn nuclear_cases() {
        assert!((nuclear_norm(&Matrix::from_diag(&[3.0, 2.0, 1.0])).unwrap() - 6.0).abs() < 1e-14);
        let mut rng = RandomSource::new(2);
        let u = rng.normal_matrix(5, 1, 1.0);
        let v = rng.normal_matrix(4, 1, 1.0);
        let u = u.scale(1.0 / u.frobenius_norm());
        let v = v.scale(1.0 / v.frobenius_norm());
        let w = u.matmul_t(&v).unwrap().scale(7.5);
        assert!((nuclear_norm(&w).unwrap() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn wide_and_tall_random() {
        let mut rng = RandomSource::new(9);
        for &(m, n) in &[(9, 4), (4, 9), (1, 5), (5, 1), (16, 16)] {
            let w = rng.normal_matrix(m, n, 1.0);
            let f = exact_svd(&w).unwrap();
            check_factors(&w, &f, 1e-12);
            let s = singular_values(&w).unwrap();
            for (a, b) in s.iter().zip(&f.s) {
                assert!((a - b).abs() < 1e-12 * f.s[0]);
            }
        }
    }

    #[test]
    fn rank_deficient_and_zero() {
        let mut rng = RandomSource::new(4);
        let a = rng.normal_matrix(8, 2, 1.0);
        let b = rng.normal_matrix(2, 6, 1.0);
        let w = a.matmul(&b).unwrap();
        let f = exact_svd(&w).unwrap();
        check_factors(&w, &f, 1e-12);
        assert!(f.s[2] < 1e-12 * f.s[0]);

        let z = Matrix::zeros(4, 3);
        let f = exact_svd(&z).unwrap();
        assert!(f.s.iter().all(|&x| x == 0.0));
        check_factors(&z, &f, 0.0);
    }

    #[test]
    fn sign_convention() {
        let mut rng = RandomSource::new(21);
        let w = rng.normal_matrix(6, 5, 1.0);
        let f = exact_svd(&w).unwrap();
        for j in 0..f.u.cols() {
            let col = f.u.column(j);
            let max = col.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(max >= 0.0);
        }
    }

    #[test]
    fn repeated_values_are_ordered_stably() {
        let w = Matrix::from_diag(&[1.0, 2.0, 2.0, 1.0]);
        let f = exact_svd(&w).unwrap();
        assert_eq!(f.s, vec![2.0, 2.0, 1.0, 1.0]);
        // column 1 comes before column 2 among the tied 2s
        assert_eq!(f.u[(1, 0)], 1.0);
        assert_eq!(f.u[(2, 1)], 1.0);
    }
}
