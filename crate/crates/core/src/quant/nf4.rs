//! 4-bit NormalFloat block quantization.
//!
//! Entries are split into consecutive row-major blocks of `block_size`
//! elements. Each block stores its absmax scale at full precision and one
//! 4-bit code per entry, the index of the codebook level nearest to
//! `entry / scale`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const NF4_LEVELS: usize = 16;
pub const DEFAULT_BLOCK_SIZE: usize = 64;

/// Sorted 16-level codebook on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Nf4Codebook {
    levels: [f64; NF4_LEVELS],
}

impl Nf4Codebook {
    /// Builds the NormalFloat table from standard-normal quantiles.
    ///
    /// The outermost quantile probability is the midpoint of `1 − 1/(2·15)`
    /// and `1 − 1/(2·16)`. Eight positive levels come from 9 evenly spaced
    /// probabilities between it and 0.5 (dropping 0.5), seven negative levels
    /// from 8 such probabilities, and zero is inserted once. Dividing by the
    /// largest quantile puts the endpoints at exactly ±1.
    pub fn normal_float() -> Self {
        let normal = Normal::standard();
        let offset = 0.5 * ((1.0 - 1.0 / 30.0) + (1.0 - 1.0 / 32.0));
        let spaced = |count: usize| -> Vec<f64> {
            (0..count - 1)
                .map(|i| offset + (0.5 - offset) * i as f64 / (count - 1) as f64)
                .collect()
        };
        let top = normal.inverse_cdf(offset);

        let mut levels = Vec::with_capacity(NF4_LEVELS);
        levels.extend(spaced(9).into_iter().map(|p| normal.inverse_cdf(p) / top));
        levels.push(0.0);
        levels.extend(spaced(8).into_iter().map(|p| -normal.inverse_cdf(p) / top));
        levels.sort_by(|a, b| a.partial_cmp(b).expect("finite quantiles"));
        // The outermost quantiles divide to ±1 up to rounding; pin them.
        levels[0] = -1.0;
        levels[NF4_LEVELS - 1] = 1.0;
        Self {
            levels: levels.try_into().expect("16 levels"),
        }
    }

    /// Custom codebook. Must be strictly increasing and contain −1, 0 and 1.
    pub fn from_levels(levels: [f64; NF4_LEVELS]) -> Result<Self> {
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("codebook must be strictly increasing".into()));
        }
        if levels[0] != -1.0 || levels[NF4_LEVELS - 1] != 1.0 || !levels.contains(&0.0) {
            return Err(Error::InvalidArgument("codebook must contain -1, 0 and 1".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64; NF4_LEVELS] {
        &self.levels
    }

    pub fn zero_code(&self) -> u8 {
        self.levels.iter().position(|&l| l == 0.0).expect("codebook contains zero") as u8
    }

    /// Index of the nearest level; ties go to the lower index.
    pub fn nearest(&self, x: f64) -> u8 {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &l) in self.levels.iter().enumerate() {
            let d = (x - l).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best as u8
    }

    pub fn max_gap(&self) -> f64 {
        self.levels.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

impl Default for Nf4Codebook {
    fn default() -> Self {
        Self::normal_float()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantConfig {
    pub block_size: usize,
    pub codebook: Nf4Codebook,
}

impl QuantConfig {
    pub fn new(block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block_size must be at least 1".into()));
        }
        Ok(Self {
            block_size,
            codebook: Nf4Codebook::normal_float(),
        })
    }
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            codebook: Nf4Codebook::normal_float(),
        }
    }
}

/// Block-wise 4-bit codes plus per-block absmax scales.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    block_size: usize,
    scales: Vec<f64>,
    /// Two codes per byte, low nibble first. The final block is padded with
    /// the zero-level code up to a whole block.
    packed: Vec<u8>,
    codebook: Nf4Codebook,
}

impl QuantizedMatrix {
    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        block_size: usize,
        scales: Vec<f64>,
        packed: Vec<u8>,
        codebook: Nf4Codebook,
    ) -> Result<Self> {
        let blocks = block_count(rows * cols, block_size);
        if scales.len() != blocks || packed.len() != packed_len(blocks * block_size) {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} with block size {block_size} needs {blocks} scales and {} code bytes",
                packed_len(blocks * block_size)
            )));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("scales must be finite and non-negative".into()));
        }
        Ok(Self {
            rows,
            cols,
            block_size,
            scales,
            packed,
            codebook,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn packed_codes(&self) -> &[u8] {
        &self.packed
    }

    pub fn codebook(&self) -> &Nf4Codebook {
        &self.codebook
    }

    #[inline]
    pub fn code(&self, index: usize) -> u8 {
        let byte = self.packed[index / 2];
        if index.is_multiple_of(2) {
            byte & 0x0F
        } else {
            byte >> 4
        }
    }

    /// All codes including block padding.
    pub fn codes(&self) -> Vec<u8> {
        (0..self.packed.len() * 2).map(|i| self.code(i)).collect()
    }
}

fn block_count(len: usize, block_size: usize) -> usize {
    len.div_ceil(block_size)
}

fn packed_len(codes: usize) -> usize {
    codes.div_ceil(2)
}

pub fn quantize(m: &Matrix, cfg: &QuantConfig) -> QuantizedMatrix {
    let data = m.as_slice();
    let bs = cfg.block_size;
    let blocks = block_count(data.len(), bs);
    let zero = cfg.codebook.zero_code();
    let mut codes = vec![zero; blocks * bs];
    let mut scales = Vec::with_capacity(blocks);

    for (b, chunk) in data.chunks(bs).enumerate() {
        let scale = chunk.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        scales.push(scale);
        if scale == 0.0 {
            continue;
        }
        for (slot, &x) in codes[b * bs..].iter_mut().zip(chunk) {
            *slot = cfg.codebook.nearest(x / scale);
        }
    }

    let packed = codes
        .chunks(2)
        .map(|pair| pair[0] | (pair.get(1).copied().unwrap_or(zero) << 4))
        .collect();
    QuantizedMatrix {
        rows: m.rows(),
        cols: m.cols(),
        block_size: bs,
        scales,
        packed,
        codebook: cfg.codebook.clone(),
    }
}

pub fn dequantize(q: &QuantizedMatrix) -> Matrix {
    let levels = q.codebook.levels();
    let len = q.rows * q.cols;
    let data = (0..len)
        .map(|i| levels[q.code(i) as usize] * q.scales[i / q.block_size])
        .collect();
    Matrix::from_vec_unchecked(q.rows, q.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use proptest::prelude::*;

    // Normal quantiles computed independently (scipy.stats.norm.ppf) for the
    // same probability grid, normalized by the largest.
    const NF4_GOLDEN: [f64; 16] = [
        -1.0,
        -0.696192805632343,
        -0.5250729594465005,
        -0.3949174259199071,
        -0.28444130892108205,
        -0.1847734028004556,
        -0.09104997598578049,
        0.0,
        0.07958031495840909,
        0.1609301443802907,
        0.2461122513474594,
        0.3379151367131279,
        0.44070973186421625,
        0.5626168879699849,
        0.7229566441594734,
        1.0,
    ];

    #[test]
    fn codebook_golden_values() {
        let cb = Nf4Codebook::normal_float();
        let levels = cb.levels();
        assert_eq!(levels.len(), 16);
        assert_eq!(levels[0], -1.0);
        assert_eq!(levels[7], 0.0);
        assert_eq!(levels[15], 1.0);
        for w in levels.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (a, b) in levels.iter().zip(NF4_GOLDEN) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(cb.zero_code(), 7);
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let cb = Nf4Codebook::normal_float();
        let l = cb.levels();
        let mid = 0.5 * (l[7] + l[8]);
        assert_eq!(cb.nearest(mid), 7);
        assert_eq!(cb.nearest(1.0), 15);
        assert_eq!(cb.nearest(-1.0), 0);
        assert_eq!(cb.nearest(0.0), 7);
    }

    #[test]
    fn zero_matrix() {
        let q = quantize(&Matrix::zeros(3, 5), &QuantConfig::default());
        assert!(q.scales().iter().all(|&s| s == 0.0));
        assert!(q.codes().iter().all(|&c| c == 7));
        assert_eq!(dequantize(&q), Matrix::zeros(3, 5));
    }

    #[test]
    fn small_block() {
        let cfg = QuantConfig::new(4).unwrap();
        let m = Matrix::from_rows(&[vec![1.0, -1.0, 0.0, 0.5]]).unwrap();
        let q = quantize(&m, &cfg);
        assert_eq!(q.scales(), &[1.0]);
        // brute force over the golden table
        let brute = |x: f64| {
            let mut best = 0;
            for (i, g) in NF4_GOLDEN.iter().enumerate() {
                if (x - g).abs() < (x - NF4_GOLDEN[best]).abs() {
                    best = i;
                }
            }
            best as u8
        };
        assert_eq!(q.codes(), vec![15, 0, 7, brute(0.5)]);
        assert_eq!(brute(0.5), 12);
        assert_eq!(q.packed_codes(), &[15, 7 | (12 << 4)]);
    }

    #[test]
    fn extremes_round_trip_exactly() {
        let cfg = QuantConfig::new(3).unwrap();
        let m = Matrix::from_rows(&[vec![2.5, -0.3, 0.1], vec![-4.0, 1.0, 4.0]]).unwrap();
        let d = dequantize(&quantize(&m, &cfg));
        assert_eq!(d[(0, 0)], 2.5);
        assert_eq!(d[(1, 0)], -4.0);
        assert_eq!(d[(1, 2)], 4.0);
    }

    #[test]
    fn partial_final_block_is_padded() {
        let cfg = QuantConfig::new(4).unwrap();
        let m = RandomSource::new(1).normal_matrix(3, 3, 1.0);
        let q = quantize(&m, &cfg);
        assert_eq!(q.scales().len(), 3);
        assert_eq!(q.packed_codes().len(), 6);
        let codes = q.codes();
        assert!(codes[9..].iter().all(|&c| c == 7));
    }

    #[test]
    fn bad_block_size() {
        assert!(QuantConfig::new(0).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..9, 1usize..9, any::<u64>(), 0u8..3).prop_map(|(r, c, seed, kind)| {
            let mut rng = RandomSource::new(seed);
            let mut m = rng.normal_matrix(r, c, 3.0);
            if kind == 1 {
                // a run of zeros spanning at least one block
                for v in m.as_mut_slice().iter_mut().take(10) {
                    *v = 0.0;
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn requantize_is_identity(m in matrix_strategy(), bs in 1usize..12) {
            let cfg = QuantConfig::new(bs).unwrap();
            let q = quantize(&m, &cfg);
            let q2 = quantize(&dequantize(&q), &cfg);
            prop_assert_eq!(q.codes(), q2.codes());
            prop_assert_eq!(
                q.scales().iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
                q2.scales().iter().map(|s| s.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn per_entry_error_bound(m in matrix_strategy(), bs in 1usize..12) {
            let cfg = QuantConfig::new(bs).unwrap();
            let half_gap = cfg.codebook.max_gap() / 2.0;
            let q = quantize(&m, &cfg);
            let d = dequantize(&q);
            for (i, (x, y)) in m.as_slice().iter().zip(d.as_slice()).enumerate() {
                let scale = q.scales()[i / bs];
                prop_assert!((x - y).abs() <= scale * half_gap * (1.0 + 1e-12));
            }
        }
    }
}
