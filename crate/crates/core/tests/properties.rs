use proptest::prelude::*;

use pissa::adapter::{forward, merge, pissa_init, to_lora_delta, variant_init, AdapterPair, InitStrategy};
use pissa::linalg::{exact_svd, singular_values};
use pissa::quant::{dequantize, error_reduction_ratio, qlora_init, quantize, QuantConfig};
use pissa::train::cosine_warmup_lr;
use pissa::RandomSource;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn principal_split_reconstructs(m in 1usize..40, n in 1usize..40, r_frac in 0.0f64..1.0, seed: u64) {
        let w = RandomSource::new(seed).normal_matrix(m, n, 1.0);
        let r = 1 + (r_frac * (m.min(n) - 1) as f64) as usize;
        let layer = pissa_init(&w, r).unwrap();
        let err = w.sub(&merge(&layer)).unwrap().frobenius_norm() / w.frobenius_norm();
        prop_assert!(err <= 1e-10);
        prop_assert_eq!(layer.rank(), r);
    }

    #[test]
    fn window_variants_reconstruct(m in 4usize..30, n in 4usize..30, seed: u64, pick in 0usize..3) {
        let w = RandomSource::new(seed).normal_matrix(m, n, 1.0);
        let strategy = [InitStrategy::Principal, InitStrategy::Medium, InitStrategy::Minor][pick];
        let layer = variant_init(&w, 2, strategy).unwrap();
        let err = w.sub(&merge(&layer)).unwrap().frobenius_norm() / w.frobenius_norm();
        prop_assert!(err <= 1e-10);
    }

    #[test]
    fn residual_spectrum_is_the_tail(m in 2usize..30, n in 2usize..30, seed: u64) {
        let w = RandomSource::new(seed).normal_matrix(m, n, 1.0);
        let r = 1 + (seed as usize) % (m.min(n) - 1);
        let full = singular_values(&w).unwrap();
        let res = singular_values(pissa_init(&w, r).unwrap().base().dense()).unwrap();
        for (a, b) in full[r..].iter().zip(&res) {
            prop_assert!((a - b).abs() <= 1e-9 * full[0]);
        }
    }

    #[test]
    fn forward_matches_merged_weight(b in 1usize..6, m in 2usize..20, n in 2usize..20, seed: u64) {
        let mut rng = RandomSource::new(seed);
        let w = rng.normal_matrix(m, n, 1.0);
        let x = rng.normal_matrix(b, m, 1.0);
        let layer = pissa_init(&w, 1).unwrap();
        let diff = forward(&layer, &x).unwrap().sub(&x.matmul(&merge(&layer)).unwrap()).unwrap().max_abs();
        prop_assert!(diff <= 1e-10 * (1.0 + x.matmul(&w).unwrap().max_abs()));
    }

    #[test]
    fn lora_delta_is_exact(m in 2usize..20, n in 2usize..20, r in 1usize..4, seed: u64) {
        let mut rng = RandomSource::new(seed);
        let init = AdapterPair::new(rng.normal_matrix(m, r, 1.0), rng.normal_matrix(r, n, 1.0), 1.0).unwrap();
        let trained = AdapterPair::new(rng.normal_matrix(m, r, 1.0), rng.normal_matrix(r, n, 1.0), 1.0).unwrap();
        let delta = to_lora_delta(&init, &trained).unwrap();
        prop_assert_eq!(delta.rank(), 2 * r);
        let expected = trained.delta().sub(&init.delta()).unwrap();
        prop_assert!(delta.delta().sub(&expected).unwrap().max_abs() <= 1e-12 * (1.0 + expected.max_abs()));
    }

    #[test]
    fn quantize_is_idempotent(rows in 1usize..10, cols in 1usize..150, scale in 1e-3f64..1e3, seed: u64) {
        let cfg = QuantConfig::default();
        let x = RandomSource::new(seed).normal_matrix(rows, cols, scale);
        let q = quantize(&x, &cfg);
        prop_assert_eq!(quantize(&dequantize(&q), &cfg), q);
    }

    #[test]
    fn qlora_ratio_is_zero(m in 4usize..40, n in 4usize..40, seed: u64) {
        let cfg = QuantConfig::default();
        let mut rng = RandomSource::new(seed);
        let w = rng.normal_matrix(m, n, 1.0);
        let layer = qlora_init(&w, 2, &cfg, &mut rng).unwrap();
        prop_assert_eq!(error_reduction_ratio(&w, &layer, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn svd_factors_are_orthonormal(m in 1usize..25, n in 1usize..25, seed: u64) {
        let w = RandomSource::new(seed).normal_matrix(m, n, 1.0);
        let f = exact_svd(&w).unwrap();
        let utu = f.u.transpose().matmul(&f.u).unwrap();
        for i in 0..utu.rows() {
            for j in 0..utu.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((utu[(i, j)] - e).abs() <= 1e-10);
            }
        }
        prop_assert!(f.s.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(f.reconstruct().sub(&w).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn schedule_stays_in_range(steps in 2usize..500, ratio in 0.0f64..0.5, lr in 1e-6f64..1.0) {
        for s in 0..steps {
            let v = cosine_warmup_lr(s, lr, steps, ratio);
            prop_assert!((0.0..=lr * (1.0 + 1e-12)).contains(&v));
        }
        prop_assert!(cosine_warmup_lr(steps - 1, lr, steps, ratio) <= lr * 1e-12 || steps == 1);
    }
}
