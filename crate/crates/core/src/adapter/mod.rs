//! Low-rank adapters on a frozen base matrix.
//!
//! A [`DecomposedLayer`] computes `y = x·base + scale·(x·A)·B` with `base`
//! frozen and `A` (m×r), `B` (r×n) trainable. The initializations differ only
//! in how `base`, `A` and `B` are carved out of the pretrained matrix `w`:
//!
//! - principal (PiSSA): `A = U_r·√S_r`, `B = √S_r·V_rᵀ`, base = the remaining
//!   singular components, so `base + A·B = w` at initialization;
//! - medium / minor: the same construction on a different singular window;
//! - Gaussian-zero (LoRA): base = `w`, `A ~ N(0, 1/r)`, `B = 0`.

mod checkpoint;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

pub use checkpoint::{load_adapter_dir, save_adapter_dir, AdapterMeta, BaseFile};

use crate::error::{Error, Result};
use crate::linalg::{exact_svd, randomized_svd, Matrix, SvdFactors};
use crate::quant::{dequantize, QuantizedMatrix};
use crate::rng::RandomSource;

/// Trainable low-rank pair applied as `scale · A · B`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterPair {
    pub a: Matrix,
    pub b: Matrix,
    pub scale: f64,
}

impl AdapterPair {
    pub fn new(a: Matrix, b: Matrix, scale: f64) -> Result<Self> {
        if a.cols() != b.rows() {
            return Err(Error::shape(
                "AdapterPair::new",
                format!("A is {}x{}, B is {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("adapter scale must be positive, got {scale}")));
        }
        Ok(Self { a, b, scale })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.b.cols()
    }

    /// `scale · A · B`
    pub fn delta(&self) -> Matrix {
        let ab = self.a.matmul(&self.b).expect("adapter shapes are consistent");
        if self.scale == 1.0 {
            ab
        } else {
            ab.scale(self.scale)
        }
    }
}

/// Which construction produced a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Pissa,
    Lora,
    Medium,
    Minor,
    Qlora,
    Qpissa,
    Loftq,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Pissa => "pissa",
            Origin::Lora => "lora",
            Origin::Medium => "medium",
            Origin::Minor => "minor",
            Origin::Qlora => "qlora",
            Origin::Qpissa => "qpissa",
            Origin::Loftq => "loftq",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl serde::Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pissa" => Origin::Pissa,
            "lora" => Origin::Lora,
            "medium" => Origin::Medium,
            "minor" => Origin::Minor,
            "qlora" => Origin::Qlora,
            "qpissa" => Origin::Qpissa,
            "loftq" => Origin::Loftq,
            other => return Err(Error::InvalidArgument(format!("unknown origin '{other}'"))),
        })
    }
}

/// Adapter initialization strategy for full-precision bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitStrategy {
    Principal,
    Medium,
    Minor,
    GaussianZero,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 4] = [
        InitStrategy::Principal,
        InitStrategy::Medium,
        InitStrategy::Minor,
        InitStrategy::GaussianZero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Principal => "principal",
            InitStrategy::Medium => "medium",
            InitStrategy::Minor => "minor",
            InitStrategy::GaussianZero => "gaussian_zero",
        }
    }

    /// Singular-index window `[start, start + r)` for the SVD-based
    /// strategies, with `k = min(m, n)` singular values available.
    pub fn window(self, k: usize, r: usize) -> Result<Range<usize>> {
        if r == 0 || r > k {
            return Err(Error::InvalidArgument(format!("rank {r} outside 1..={k}")));
        }
        let start = match self {
            InitStrategy::Principal => 0,
            InitStrategy::Medium => (k - r) / 2,
            InitStrategy::Minor => k - r,
            InitStrategy::GaussianZero => {
                return Err(Error::InvalidArgument(
                    "gaussian_zero does not select a singular window".into(),
                ))
            }
        };
        Ok(start..start + r)
    }

    fn origin(self) -> Origin {
        match self {
            InitStrategy::Principal => Origin::Pissa,
            InitStrategy::Medium => Origin::Medium,
            InitStrategy::Minor => Origin::Minor,
            InitStrategy::GaussianZero => Origin::Lora,
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "principal" | "pissa" => InitStrategy::Principal,
            "medium" => InitStrategy::Medium,
            "minor" => InitStrategy::Minor,
            "gaussian_zero" | "lora" => InitStrategy::GaussianZero,
            other => return Err(Error::InvalidArgument(format!("unknown init strategy '{other}'"))),
        })
    }
}

/// Frozen base weight, full precision or NF4.
#[derive(Clone, Debug)]
pub enum Base {
    Dense(Matrix),
    /// The dequantized matrix is cached next to the codes.
    Quantized { q: QuantizedMatrix, dense: Matrix },
}

impl Base {
    pub fn quantized(q: QuantizedMatrix) -> Self {
        let dense = dequantize(&q);
        Base::Quantized { q, dense }
    }

    pub fn dense(&self) -> &Matrix {
        match self {
            Base::Dense(m) => m,
            Base::Quantized { dense, .. } => dense,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.dense().shape()
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Base::Quantized { .. })
    }
}

/// Frozen base plus trainable adapter.
#[derive(Clone, Debug)]
pub struct DecomposedLayer {
    base: Base,
    adapter: AdapterPair,
    origin: Origin,
}

impl DecomposedLayer {
    pub fn new(base: Base, adapter: AdapterPair, origin: Origin) -> Result<Self> {
        let (m, n) = base.shape();
        if adapter.in_dim() != m || adapter.out_dim() != n {
            return Err(Error::shape(
                "DecomposedLayer::new",
                format!(
                    "base is {m}x{n} but adapter maps {}->{}",
                    adapter.in_dim(),
                    adapter.out_dim()
                ),
            ));
        }
        Ok(Self { base, adapter, origin })
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn adapter(&self) -> &AdapterPair {
        &self.adapter
    }

    /// Mutable adapter access for optimizers. The base stays frozen.
    pub fn adapter_mut(&mut self) -> &mut AdapterPair {
        &mut self.adapter
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn rank(&self) -> usize {
        self.adapter.rank()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }
}

fn check_rank(w: &Matrix, r: usize) -> Result<()> {
    let k = w.rows().min(w.cols());
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={k} for a {}x{} matrix",
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// Splits singular window `range` of `svd` into `(A, B)` with the square root
/// of the singular values on each side.
pub(crate) fn split_window(svd: &SvdFactors, range: Range<usize>) -> (Matrix, Matrix) {
    let root: Vec<f64> = svd.s[range.clone()].iter().map(|s| s.sqrt()).collect();
    let a = svd.u.columns(range.clone()).scale_columns(&root);
    let b = svd.v.columns(range).scale_columns(&root).transpose();
    (a, b)
}

/// Builds the layer for singular window `range`: the adapter takes the window,
/// the base is the sum of every other singular component.
fn layer_from_window(svd: &SvdFactors, range: Range<usize>, origin: Origin) -> Result<DecomposedLayer> {
    let k = svd.s.len();
    let (a, b) = split_window(svd, range.clone());
    let (m, n) = (svd.u.rows(), svd.v.rows());
    let mut base = Matrix::zeros(m, n);
    if range.start > 0 {
        base = base.add(&svd.window(0..range.start))?;
    }
    if range.end < k {
        base = base.add(&svd.window(range.end..k))?;
    }
    DecomposedLayer::new(Base::Dense(base), AdapterPair::new(a, b, 1.0)?, origin)
}

/// PiSSA initialization from the exact SVD.
pub fn pissa_init(w: &Matrix, r: usize) -> Result<DecomposedLayer> {
    variant_init(w, r, InitStrategy::Principal)
}

/// PiSSA initialization from a randomized SVD with `niter` subspace
/// iterations. Only the leading `r` triplets are available, so the base is
/// `w − A·B`.
pub fn pissa_init_fast(w: &Matrix, r: usize, niter: usize, rng: &mut RandomSource) -> Result<DecomposedLayer> {
    check_rank(w, r)?;
    let svd = randomized_svd(w, r, niter, rng)?;
    let (a, b) = split_window(&svd, 0..r);
    let base = w.sub(&a.matmul(&b)?)?;
    DecomposedLayer::new(Base::Dense(base), AdapterPair::new(a, b, 1.0)?, Origin::Pissa)
}

/// Adapter from the principal, medium or minor singular window.
pub fn variant_init(w: &Matrix, r: usize, strategy: InitStrategy) -> Result<DecomposedLayer> {
    check_rank(w, r)?;
    let range = strategy.window(w.rows().min(w.cols()), r)?;
    let svd = exact_svd(w)?;
    layer_from_window(&svd, range, strategy.origin())
}

/// Standard deviation of LoRA's Gaussian `A` entries: `1/√r`.
pub fn lora_std(r: usize) -> f64 {
    1.0 / (r as f64).sqrt()
}

/// LoRA initialization: base = `w`, `A ~ N(0, 1/r)`, `B = 0`.
pub fn lora_init(w: &Matrix, r: usize, rng: &mut RandomSource) -> Result<DecomposedLayer> {
    lora_init_with_std(w, r, lora_std(r), rng)
}

pub fn lora_init_with_std(w: &Matrix, r: usize, std: f64, rng: &mut RandomSource) -> Result<DecomposedLayer> {
    check_rank(w, r)?;
    let a = rng.normal_matrix(w.rows(), r, std);
    let b = Matrix::zeros(r, w.cols());
    DecomposedLayer::new(Base::Dense(w.clone()), AdapterPair::new(a, b, 1.0)?, Origin::Lora)
}

/// Dispatches on `strategy`; `rng` is only drawn from for Gaussian-zero.
pub fn init_layer(w: &Matrix, r: usize, strategy: InitStrategy, rng: &mut RandomSource) -> Result<DecomposedLayer> {
    match strategy {
        InitStrategy::GaussianZero => lora_init(w, r, rng),
        s => variant_init(w, r, s),
    }
}

/// `x·base + scale·(x·A)·B`
pub fn forward(layer: &DecomposedLayer, x: &Matrix) -> Result<Matrix> {
    let (m, _) = layer.shape();
    if x.cols() != m {
        return Err(Error::shape(
            "forward",
            format!("input has {} features, layer expects {m}", x.cols()),
        ));
    }
    let ad = &layer.adapter;
    let y = x.matmul(layer.base.dense())?;
    let low = x.matmul(&ad.a)?.matmul(&ad.b)?;
    y.add_scaled(&low, ad.scale)
}

/// Gradients of a loss with respect to `A` and `B` given `dY = ∂L/∂Y` for a
/// batch `x`: `dA = scale·xᵀ·dY·Bᵀ`, `dB = scale·Aᵀ·xᵀ·dY`.
pub fn adapter_gradients(x: &Matrix, dy: &Matrix, adapter: &AdapterPair) -> Result<(Matrix, Matrix)> {
    if x.rows() != dy.rows() || x.cols() != adapter.in_dim() || dy.cols() != adapter.out_dim() {
        return Err(Error::shape(
            "adapter_gradients",
            format!(
                "x {}x{}, dY {}x{}, adapter {}->{}",
                x.rows(),
                x.cols(),
                dy.rows(),
                dy.cols(),
                adapter.in_dim(),
                adapter.out_dim()
            ),
        ));
    }
    // (b×r) intermediates
    let dy_bt = dy.matmul_t(&adapter.b)?;
    let xa = x.matmul(&adapter.a)?;
    let da = x.t_matmul(&dy_bt)?.scale(adapter.scale);
    let db = xa.t_matmul(dy)?.scale(adapter.scale);
    Ok((da, db))
}

/// Dense equivalent `base + scale·A·B`.
pub fn merge(layer: &DecomposedLayer) -> Matrix {
    layer
        .base
        .dense()
        .add(&layer.adapter.delta())
        .expect("layer shapes are consistent")
}

/// Re-expresses a trained adapter as a plain low-rank update of the original
/// weight: `ΔA = [A′ A]`, `ΔB = [B′; −B]`, so `ΔA·ΔB = A′B′ − AB` and
/// `w + scale·ΔA·ΔB = base + scale·A′B′`.
pub fn to_lora_delta(initial: &AdapterPair, trained: &AdapterPair) -> Result<AdapterPair> {
    if initial.a.shape() != trained.a.shape() || initial.b.shape() != trained.b.shape() {
        return Err(Error::shape(
            "to_lora_delta",
            format!(
                "initial A {:?} B {:?} vs trained A {:?} B {:?}",
                initial.a.shape(),
                initial.b.shape(),
                trained.a.shape(),
                trained.b.shape()
            ),
        ));
    }
    if initial.scale != trained.scale {
        return Err(Error::InvalidArgument(format!(
            "adapter scales differ: {} vs {}",
            initial.scale, trained.scale
        )));
    }
    let delta_a = trained.a.hstack(&initial.a)?;
    let delta_b = trained.b.vstack(&initial.b.scale(-1.0))?;
    AdapterPair::new(delta_a, delta_b, trained.scale)
}

/// `‖w − merge(layer)‖_F / ‖w‖_F`, or the absolute error when `w = 0`.
pub fn reconstruction_error(w: &Matrix, layer: &DecomposedLayer) -> Result<f64> {
    let err = w.sub(&merge(layer))?.frobenius_norm();
    let norm = w.frobenius_norm();
    Ok(if norm > 0.0 { err / norm } else { err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{qr_thin, relative_error};

    fn diag(d: &[f64]) -> Matrix {
        Matrix::from_diag(d)
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        let err = a.sub(b).unwrap().max_abs();
        assert!(err <= tol, "max abs difference {err}");
    }

    #[test]
    fn pissa_rank_one_input() {
        let mut rng = RandomSource::new(1);
        let u = rng.normal_matrix(6, 1, 1.0);
        let v = rng.normal_matrix(4, 1, 1.0);
        let u = u.scale(1.0 / u.frobenius_norm());
        let v = v.scale(1.0 / v.frobenius_norm());
        let w = u.matmul_t(&v).unwrap().scale(5.0);
        let layer = pissa_init(&w, 1).unwrap();
        assert!(layer.base().dense().max_abs() < 1e-12);
        assert_close(&layer.adapter().delta(), &w, 1e-12);
    }

    #[test]
    fn pissa_diagonal() {
        let w = diag(&[3.0, 2.0, 1.0]);
        let layer = pissa_init(&w, 1).unwrap();
        let s3 = 3f64.sqrt();
        assert_close(&layer.adapter().a, &Matrix::from_rows(&[vec![s3], vec![0.0], vec![0.0]]).unwrap(), 1e-15);
        assert_close(&layer.adapter().b, &Matrix::from_rows(&[vec![s3, 0.0, 0.0]]).unwrap(), 1e-15);
        assert_close(layer.base().dense(), &diag(&[0.0, 2.0, 1.0]), 1e-15);
        assert_eq!(layer.origin(), Origin::Pissa);
    }

    #[test]
    fn pissa_random_reconstructs() {
        let w = RandomSource::new(2).normal_matrix(32, 48, 1.0);
        let layer = pissa_init(&w, 8).unwrap();
        assert!(reconstruction_error(&w, &layer).unwrap() <= 1e-10);
        let x = RandomSource::new(3).normal_matrix(5, 32, 1.0);
        let y = forward(&layer, &x).unwrap();
        let y_ref = x.matmul(&w).unwrap();
        assert!(relative_error(&y, &y_ref).unwrap() <= 1e-9);
    }

    #[test]
    fn pissa_factor_structure() {
        let w = RandomSource::new(4).normal_matrix(20, 12, 1.0);
        let svd = exact_svd(&w).unwrap();
        let layer = pissa_init(&w, 5).unwrap();
        let ad = layer.adapter();
        let s = diag(&svd.s[..5]);
        assert_close(&ad.a.t_matmul(&ad.a).unwrap(), &s, 1e-8);
        assert_close(&ad.b.matmul_t(&ad.b).unwrap(), &s, 1e-8);
    }

    #[test]
    fn full_rank_principal_has_zero_base() {
        let w = RandomSource::new(5).normal_matrix(6, 4, 1.0);
        let layer = pissa_init(&w, 4).unwrap();
        assert_eq!(layer.base().dense().max_abs(), 0.0);
        assert!(reconstruction_error(&w, &layer).unwrap() < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let w = Matrix::identity(3);
        assert!(pissa_init(&w, 0).is_err());
        assert!(pissa_init(&w, 4).is_err());
        assert!(lora_init(&w, 4, &mut RandomSource::new(0)).is_err());
        assert!(variant_init(&w, 2, InitStrategy::GaussianZero).is_err());
    }

    #[test]
    fn lora_properties() {
        let w = RandomSource::new(6).normal_matrix(7, 5, 1.0);
        let layer = lora_init(&w, 3, &mut RandomSource::new(9)).unwrap();
        assert_eq!(layer.adapter().delta().max_abs(), 0.0);
        assert_eq!(merge(&layer), w);
        assert_eq!(reconstruction_error(&w, &layer).unwrap(), 0.0);
        let x = RandomSource::new(8).normal_matrix(4, 7, 1.0);
        assert_eq!(forward(&layer, &x).unwrap(), x.matmul(&w).unwrap());
        let again = lora_init(&w, 3, &mut RandomSource::new(9)).unwrap();
        assert_eq!(again.adapter().a, layer.adapter().a);
    }

    #[test]
    fn windows() {
        assert_eq!(InitStrategy::Principal.window(4, 2).unwrap(), 0..2);
        assert_eq!(InitStrategy::Medium.window(4, 2).unwrap(), 1..3);
        assert_eq!(InitStrategy::Minor.window(4, 2).unwrap(), 2..4);
        assert_eq!(InitStrategy::Medium.window(5, 2).unwrap(), 1..3);
        assert!(InitStrategy::Minor.window(3, 4).is_err());
    }

    #[test]
    fn variant_diagonal_cases() {
        let w = diag(&[4.0, 3.0, 2.0, 1.0]);
        let minor = variant_init(&w, 1, InitStrategy::Minor).unwrap();
        assert_close(&minor.adapter().delta(), &diag(&[0.0, 0.0, 0.0, 1.0]), 1e-15);
        assert_close(minor.base().dense(), &diag(&[4.0, 3.0, 2.0, 0.0]), 1e-15);

        let medium = variant_init(&w, 2, InitStrategy::Medium).unwrap();
        assert_close(&medium.adapter().delta(), &diag(&[0.0, 3.0, 2.0, 0.0]), 1e-15);
        assert_close(medium.base().dense(), &diag(&[4.0, 0.0, 0.0, 1.0]), 1e-15);

        let principal = variant_init(&w, 2, InitStrategy::Principal).unwrap();
        let pissa = pissa_init(&w, 2).unwrap();
        assert_eq!(principal.adapter(), pissa.adapter());
        assert_eq!(principal.base().dense(), pissa.base().dense());
    }

    #[test]
    fn variants_reconstruct_random() {
        let w = RandomSource::new(10).normal_matrix(15, 11, 1.0);
        for s in [InitStrategy::Principal, InitStrategy::Medium, InitStrategy::Minor] {
            let layer = variant_init(&w, 3, s).unwrap();
            assert!(reconstruction_error(&w, &layer).unwrap() <= 1e-10, "{s}");
        }
    }

    #[test]
    fn identity_probe() {
        let w = RandomSource::new(11).normal_matrix(5, 6, 1.0);
        let mut layer = pissa_init(&w, 2).unwrap();
        layer.adapter_mut().scale = 2.0;
        let y = forward(&layer, &Matrix::identity(5)).unwrap();
        assert_close(&y, &merge(&layer), 1e-14);
    }

    #[test]
    fn gradients_zero_cases() {
        let mut rng = RandomSource::new(12);
        let x = rng.normal_matrix(4, 6, 1.0);
        let dy = rng.normal_matrix(4, 5, 1.0);
        let lora = AdapterPair::new(rng.normal_matrix(6, 2, 1.0), Matrix::zeros(2, 5), 1.0).unwrap();
        let (da, db) = adapter_gradients(&x, &dy, &lora).unwrap();
        assert_eq!(da.max_abs(), 0.0);
        assert!(db.max_abs() > 0.0);

        let ad = AdapterPair::new(rng.normal_matrix(6, 2, 1.0), rng.normal_matrix(2, 5, 1.0), 1.0).unwrap();
        let (da, db) = adapter_gradients(&x, &Matrix::zeros(4, 5), &ad).unwrap();
        assert_eq!(da.max_abs(), 0.0);
        assert_eq!(db.max_abs(), 0.0);
        assert!(adapter_gradients(&x, &rng.normal_matrix(3, 5, 1.0), &ad).is_err());
    }

    /// Central finite differences of L = Σ Y.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RandomSource::new(13);
        let (b, m, n, r) = (4, 6, 5, 2);
        let x = rng.normal_matrix(b, m, 1.0);
        let base = rng.normal_matrix(m, n, 1.0);
        let ad = AdapterPair::new(rng.normal_matrix(m, r, 1.0), rng.normal_matrix(r, n, 1.0), 1.5).unwrap();
        let loss = |ad: &AdapterPair| -> f64 {
            let layer = DecomposedLayer::new(Base::Dense(base.clone()), ad.clone(), Origin::Pissa).unwrap();
            forward(&layer, &x).unwrap().as_slice().iter().sum()
        };
        let dy = Matrix::from_fn(b, n, |_, _| 1.0);
        let (da, db) = adapter_gradients(&x, &dy, &ad).unwrap();
        let h = 1e-6;
        for (which, grad) in [(0, &da), (1, &db)] {
            for idx in 0..grad.as_slice().len() {
                let mut plus = ad.clone();
                let mut minus = ad.clone();
                let (p, q) = if which == 0 { (&mut plus.a, &mut minus.a) } else { (&mut plus.b, &mut minus.b) };
                p.as_mut_slice()[idx] += h;
                q.as_mut_slice()[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grad.as_slice()[idx];
                assert!((fd - an).abs() / an.abs().max(1e-8) <= 1e-5, "{which}:{idx} {fd} vs {an}");
            }
        }
    }

    #[test]
    fn merge_matches_forward_after_update() {
        let mut rng = RandomSource::new(14);
        let w = rng.normal_matrix(8, 6, 1.0);
        let mut layer = pissa_init(&w, 3).unwrap();
        let bump = rng.normal_matrix(3, 6, 0.1);
        let ad = layer.adapter_mut();
        ad.b = ad.b.add(&bump).unwrap();
        let merged = merge(&layer);
        let x = rng.normal_matrix(5, 8, 1.0);
        let y1 = forward(&layer, &x).unwrap();
        let y2 = x.matmul(&merged).unwrap();
        assert!(y1.sub(&y2).unwrap().max_abs() <= 1e-10 * y2.max_abs().max(1.0));
    }

    #[test]
    fn lora_delta_identity() {
        let mut rng = RandomSource::new(15);
        let init = AdapterPair::new(rng.normal_matrix(7, 3, 1.0), rng.normal_matrix(3, 5, 1.0), 1.0).unwrap();
        let same = to_lora_delta(&init, &init).unwrap();
        assert_eq!(same.a.shape(), (7, 6));
        assert_eq!(same.b.shape(), (6, 5));
        assert!(same.a.matmul(&same.b).unwrap().max_abs() < 1e-14);

        let trained = AdapterPair::new(rng.normal_matrix(7, 3, 1.0), rng.normal_matrix(3, 5, 1.0), 1.0).unwrap();
        let delta = to_lora_delta(&init, &trained).unwrap();
        let direct = trained
            .a
            .matmul(&trained.b)
            .unwrap()
            .sub(&init.a.matmul(&init.b).unwrap())
            .unwrap();
        assert_close(&delta.a.matmul(&delta.b).unwrap(), &direct, 1e-12);

        let wrong = AdapterPair::new(rng.normal_matrix(7, 2, 1.0), rng.normal_matrix(2, 5, 1.0), 1.0).unwrap();
        assert!(to_lora_delta(&init, &wrong).is_err());
    }

    #[test]
    fn fast_init_reconstructs() {
        let mut rng = RandomSource::new(16);
        let k = 24;
        let (u, _) = qr_thin(&rng.normal_matrix(30, k, 1.0)).unwrap();
        let (v, _) = qr_thin(&rng.normal_matrix(k, k, 1.0)).unwrap();
        let s: Vec<f64> = (1..=k).map(|i| 1.0 / i as f64).collect();
        let w = u.scale_columns(&s).matmul_t(&v).unwrap();
        let layer = pissa_init_fast(&w, 4, 8, &mut rng).unwrap();
        assert!(reconstruction_error(&w, &layer).unwrap() < 1e-12);
        let exact = pissa_init(&w, 4).unwrap();
        assert_close(&layer.adapter().delta(), &exact.adapter().delta(), 1e-6);
    }

    #[test]
    fn parse_names() {
        assert_eq!("medium".parse::<InitStrategy>().unwrap(), InitStrategy::Medium);
        assert_eq!("loftq".parse::<Origin>().unwrap(), Origin::Loftq);
        assert!("nope".parse::<Origin>().is_err());
        assert!(AdapterPair::new(Matrix::zeros(2, 1), Matrix::zeros(1, 2), 0.0).is_err());
    }
}
