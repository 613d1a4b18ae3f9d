//! Multiscale linear model.
//!
//! A sample is a vector split into levels `ℓ = 0, 1, …`; level `ℓ` holds
//! `q^ℓ` coordinates, independent and uniform with variance `p^(-ℓ)`. The
//! ground-truth coefficients put energy `r^ℓ` on level `ℓ`, spread evenly
//! over its coordinates. The compressor keeps levels `0..=m` and discards the
//! rest, so the number of stored coordinates is `L = Σ_{ℓ≤m} q^ℓ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::StreamKey;
use crate::{Error, Result};

/// Generative parameters of the multiscale model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Block growth factor: level `ℓ` has `q^ℓ` coordinates.
    pub q: usize,
    /// Spectral decay base: level `ℓ` coordinates have variance `p^(-ℓ)`.
    pub p: f64,
    /// Signal decay base: `‖θ^(ℓ)‖² = r^ℓ`.
    pub r: f64,
    /// Noise standard deviation.
    pub tau: f64,
    /// Number of simulated levels, `ℓ = 0..m_max`.
    pub m_max: usize,
    pub seed: u64,
}

impl SpectrumConfig {
    /// Parameters of the small simulation used to illustrate the law:
    /// `q = 2, p = 2.1, r = 0.99, τ = 1` with eleven levels.
    pub fn reference() -> Self {
        SpectrumConfig { q: 2, p: 2.1, r: 0.99, tau: 1.0, m_max: 11, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.q < 2 {
            return bad(format!("q must be an integer >= 2, got {}", self.q));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return bad(format!("p must be > 1, got {}", self.p));
        }
        if (self.q as f64) >= self.p {
            return bad(format!("q < p is required for finite feature energy (q = {}, p = {})", self.q, self.p));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return bad(format!("r must lie in (0, 1), got {}", self.r));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return bad(format!("tau must be finite and >= 0, got {}", self.tau));
        }
        if self.m_max < 1 {
            return bad("m_max must be >= 1".into());
        }
        if total_coords(self.q, self.m_max).is_none() {
            return bad(format!("q^m_max overflows (q = {}, m_max = {})", self.q, self.m_max));
        }
        Ok(())
    }

    /// Whether `r·p < 1`, the regime in which the exponent formulas are proved.
    pub fn theorem_regime(&self) -> bool {
        self.r * self.p < 1.0
    }

    /// `κ = log p / log q`.
    pub fn kappa(&self) -> f64 {
        math::ln(self.p) / math::ln(self.q as f64)
    }

    /// Per-coordinate variance `s_ℓ = p^(-ℓ)` of level `ℓ`.
    pub fn level_variance(&self, level: usize) -> f64 {
        math::powi(self.p, -(level as i32))
    }

    /// Signal energy `r^ℓ` carried by level `ℓ`.
    pub fn level_energy(&self, level: usize) -> f64 {
        math::powi(self.r, level as i32)
    }

    /// `‖θ^(ℓ)‖²` for every simulated level.
    pub fn theta_norms(&self) -> Vec<f64> {
        (0..self.m_max).map(|l| self.level_energy(l)).collect()
    }
}

/// `Σ_{ℓ<levels} q^ℓ`, or `None` on overflow.
fn total_coords(q: usize, levels: usize) -> Option<usize> {
    let mut width = 1usize;
    let mut total = 0usize;
    for _ in 0..levels {
        total = total.checked_add(width)?;
        width = width.checked_mul(q)?;
    }
    Some(total)
}

/// Offset of level `level` in the flat layout, `(q^level - 1) / (q - 1)`.
fn level_offset(q: usize, level: usize) -> usize {
    total_coords(q, level).expect("level offset overflow")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDims {
    pub dims: Vec<usize>,
    /// Total coordinate count `L`.
    pub total: usize,
}

/// Block lengths `[q^0, …, q^(levels-1)]` and their sum.
pub fn block_dims(config: &SpectrumConfig, levels: usize) -> Result<BlockDims> {
    if levels < 1 || levels > config.m_max {
        return Err(Error::LevelOutOfRange { level: levels, min: 1, max: config.m_max });
    }
    let dims: Vec<usize> = (0..levels).map(|l| config.q.pow(l as u32)).collect();
    let total = dims.iter().sum();
    Ok(BlockDims { dims, total })
}

/// Coordinates kept by the compressor at truncation level `m` (levels `0..=m`).
pub fn stored_coords(config: &SpectrumConfig, m: usize) -> Result<usize> {
    block_dims(config, m + 1).map(|d| d.total)
}

/// Level-indexed coefficient blocks stored contiguously; block `ℓ` has
/// `q^ℓ` entries and starts at `(q^ℓ - 1)/(q - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    q: usize,
    levels: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(q: usize, levels: usize) -> Self {
        let len = total_coords(q, levels).expect("block vector too large");
        BlockVector { q, levels, data: vec![0.0; len] }
    }

    /// Builds a vector from its flat layout. The length must match `q` and `levels`.
    pub fn from_flat(q: usize, levels: usize, data: Vec<f64>) -> Result<Self> {
        match total_coords(q, levels) {
            Some(len) if len == data.len() => Ok(BlockVector { q, levels, data }),
            _ => Err(Error::ShapeMismatch(format!(
                "{} entries do not form {} levels with q = {}",
                data.len(),
                levels,
                q
            ))),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level_count(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, level: usize) -> &[f64] {
        let start = level_offset(self.q, level);
        &self.data[start..start + self.q.pow(level as u32)]
    }

    pub fn block_mut(&mut self, level: usize) -> &mut [f64] {
        let start = level_offset(self.q, level);
        let width = self.q.pow(level as u32);
        &mut self.data[start..start + width]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.levels).map(move |l| self.block(l))
    }

    pub fn block_norm_sq(&self, level: usize) -> f64 {
        self.block(level).iter().map(|v| v * v).sum()
    }

    pub fn same_structure(&self, other: &BlockVector) -> bool {
        self.q == other.q && self.levels == other.levels
    }

    pub fn dot(&self, other: &BlockVector) -> Result<f64> {
        if !self.same_structure(other) {
            return Err(shape_error(self, other));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

fn shape_error(a: &BlockVector, b: &BlockVector) -> Error {
    Error::ShapeMismatch(format!(
        "(q = {}, levels = {}) vs (q = {}, levels = {})",
        a.q, a.levels, b.q, b.levels
    ))
}

/// Ground truth with every entry of block `ℓ` equal to `sqrt(r^ℓ q^(-ℓ))`.
pub fn make_ground_truth(config: &SpectrumConfig) -> BlockVector {
    let mut theta = BlockVector::zeros(config.q, config.m_max);
    for level in 0..config.m_max {
        let width = config.q.pow(level as u32) as f64;
        let value = math::sqrt(config.level_energy(level) / width);
        theta.block_mut(level).fill(value);
    }
    theta
}

/// Fills `out` with i.i.d. uniform entries of variance `p^(-level)`.
pub(crate) fn fill_level<R: Rng>(config: &SpectrumConfig, level: usize, rng: &mut R, out: &mut [f64]) {
    let half_width = math::sqrt(3.0 * config.level_variance(level));
    let dist = Uniform::new_inclusive(-half_width, half_width).expect("finite uniform bounds");
    for v in out.iter_mut() {
        *v = dist.sample(rng);
    }
}

/// Key of the stream that generates level `level` of sample `index`.
pub(crate) fn feature_stream(key: StreamKey, index: usize, level: usize) -> StreamKey {
    key.child(index as u64).child(level as u64)
}

/// Draws `n` feature vectors over all `m_max` levels. Sample `i`, level `ℓ`
/// comes from the stream `key / i / ℓ`, so any subset of levels can be
/// regenerated independently.
pub fn sample_features(config: &SpectrumConfig, n: usize, key: StreamKey) -> Vec<BlockVector> {
    (0..n)
        .map(|i| {
            let mut x = BlockVector::zeros(config.q, config.m_max);
            for level in 0..config.m_max {
                let mut rng = feature_stream(key, i, level).rng();
                fill_level(config, level, &mut rng, x.block_mut(level));
            }
            x
        })
        .collect()
}

/// `y_i = ⟨x_i, θ⟩ + ε_i` with `ε_i ~ N(0, τ²)` drawn in sample order from `rng`.
pub fn sample_labels<R: Rng>(
    theta: &BlockVector,
    features: &[BlockVector],
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let noise = noise_distribution(tau)?;
    features
        .iter()
        .map(|x| Ok(x.dot(theta)? + noise.sample(rng)))
        .collect()
}

pub(crate) fn noise_distribution(tau: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, tau).map_err(|_| Error::InvalidConfig(format!("tau must be finite and >= 0, got {tau}")))
}

/// Keeps blocks `0..=m`.
pub fn truncate(v: &BlockVector, m: usize) -> Result<BlockVector> {
    if m >= v.levels {
        return Err(Error::LevelOutOfRange { level: m, min: 0, max: v.levels.saturating_sub(1) });
    }
    let len = level_offset(v.q, m + 1);
    Ok(BlockVector { q: v.q, levels: m + 1, data: v.data[..len].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(q: usize, p: f64, m_max: usize) -> SpectrumConfig {
        SpectrumConfig { q, p, r: 0.99, tau: 1.0, m_max, seed: 1 }
    }

    #[test]
    fn block_dims_examples() {
        let d = block_dims(&cfg(2, 2.1, 11), 4).unwrap();
        assert_eq!(d.dims, vec![1, 2, 4, 8]);
        assert_eq!(d.total, 15);
        let d = block_dims(&cfg(2, 2.1, 11), 1).unwrap();
        assert_eq!((d.dims, d.total), (vec![1], 1));
        let d = block_dims(&cfg(3, 3.5, 5), 3).unwrap();
        assert_eq!((d.dims, d.total), (vec![1, 3, 9], 13));
        assert!(matches!(block_dims(&cfg(2, 2.1, 3), 4), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(block_dims(&cfg(2, 2.1, 3), 0), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn validation() {
        assert!(SpectrumConfig::reference().validate().is_ok());
        assert!(!SpectrumConfig::reference().theorem_regime());
        let mut c = SpectrumConfig::reference();
        c.p = 1.9;
        assert!(c.validate().is_err());
        c = SpectrumConfig::reference();
        c.r = 1.0;
        assert!(c.validate().is_err());
        c = SpectrumConfig::reference();
        c.q = 1;
        assert!(c.validate().is_err());
        c = SpectrumConfig::reference();
        c.m_max = 0;
        assert!(c.validate().is_err());
        c = SpectrumConfig { q: 2, p: 4.0, r: 0.2, tau: 0.0, m_max: 3, seed: 0 };
        assert!(c.validate().is_ok() && c.theorem_regime());
    }

    #[test]
    fn ground_truth_energy() {
        let config = SpectrumConfig::reference();
        let theta = make_ground_truth(&config);
        assert_eq!(theta.block(0), &[1.0]);
        let b2 = theta.block(2);
        assert_eq!(b2.len(), 4);
        for v in b2 {
            assert!((v - (0.9801f64 / 4.0).sqrt()).abs() < 1e-15);
            assert!((v - 0.495).abs() < 1e-12);
        }
        for level in 0..config.m_max {
            let ratio = theta.block_norm_sq(level) / config.r.powi(level as i32);
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_respect_support_and_are_reproducible() {
        let config = cfg(2, 2.1, 6);
        let xs = sample_features(&config, 50, StreamKey::new(3));
        for x in &xs {
            for level in 0..config.m_max {
                let bound = (3.0 * 2.1f64.powi(-(level as i32))).sqrt();
                assert!(x.block(level).iter().all(|v| v.abs() <= bound));
            }
        }
        assert_eq!(xs, sample_features(&config, 50, StreamKey::new(3)));
        assert_ne!(xs, sample_features(&config, 50, StreamKey::new(4)));
    }

    #[test]
    fn feature_variance_matches_level_scale() {
        let config = cfg(2, 2.1, 4);
        let n = 100_000;
        let xs = sample_features(&config, n, StreamKey::new(11));
        // level 0: U(-√3, √3) has variance 1
        let v0 = xs.iter().map(|x| x.block(0)[0].powi(2)).sum::<f64>() / n as f64;
        assert!((v0 - 1.0).abs() < 0.02, "{v0}");
        // level 3: variance 2.1^-3; sd of x² for a uniform is s·sqrt(4/5)
        let s3 = 2.1f64.powi(-3);
        let v3 = xs.iter().map(|x| x.block(3)[5].powi(2)).sum::<f64>() / n as f64;
        let band = 3.0 * s3 * (0.8f64).sqrt() / (n as f64).sqrt();
        assert!((v3 - s3).abs() < band, "{v3} vs {s3}");
    }

    #[test]
    fn labels_noiseless_and_pure_noise() {
        let config = cfg(2, 2.1, 5);
        let theta = make_ground_truth(&config);
        let xs = sample_features(&config, 20, StreamKey::new(5));
        let mut rng = StreamKey::new(9).rng();
        let y = sample_labels(&theta, &xs, 0.0, &mut rng).unwrap();
        for (x, yi) in xs.iter().zip(&y) {
            assert_eq!(*yi, x.dot(&theta).unwrap());
        }

        let zero = BlockVector::zeros(2, 5);
        let xs = sample_features(&config, 100_000, StreamKey::new(6));
        let y = sample_labels(&zero, &xs, 1.0, &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn conditional_noise_variance() {
        let config = cfg(2, 2.1, 4);
        let theta = make_ground_truth(&config);
        let x = sample_features(&config, 1, StreamKey::new(1)).pop().unwrap();
        let replicas = alloc::vec![x.clone(); 100_000];
        let mut rng = StreamKey::new(2).rng();
        let y = sample_labels(&theta, &replicas, 1.0, &mut rng).unwrap();
        let signal = x.dot(&theta).unwrap();
        let var = y.iter().map(|v| (v - signal).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn labels_reject_mismatched_blocks() {
        let theta = BlockVector::zeros(2, 3);
        let xs = alloc::vec![BlockVector::zeros(2, 4)];
        let mut rng = StreamKey::new(0).rng();
        assert!(matches!(sample_labels(&theta, &xs, 1.0, &mut rng), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn truncation() {
        let config = cfg(2, 2.1, 4);
        let x = sample_features(&config, 1, StreamKey::new(8)).pop().unwrap();
        assert_eq!(truncate(&x, 3).unwrap(), x);
        let t0 = truncate(&x, 0).unwrap();
        assert_eq!(t0.len(), 1);
        assert_eq!(t0.block(0), x.block(0));
        let t1 = truncate(&x, 1).unwrap();
        assert_eq!(t1.len(), block_dims(&config, 2).unwrap().total);
        assert_eq!(t1.len(), 3);
        assert!(matches!(truncate(&x, 4), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn inner_product_splits_across_levels() {
        let config = cfg(2, 2.1, 6);
        let theta = make_ground_truth(&config);
        for x in sample_features(&config, 10, StreamKey::new(21)) {
            let full = x.dot(&theta).unwrap();
            for m in 0..config.m_max {
                let head = truncate(&x, m).unwrap().dot(&truncate(&theta, m).unwrap()).unwrap();
                let tail: f64 = (m + 1..config.m_max)
                    .map(|l| x.block(l).iter().zip(theta.block(l)).map(|(a, b)| a * b).sum::<f64>())
                    .sum();
                assert!((head + tail - full).abs() <= 1e-10 * full.abs().max(1.0));
            }
        }
    }

    #[test]
    fn from_flat_checks_length() {
        assert!(BlockVector::from_flat(2, 3, alloc::vec![0.0; 7]).is_ok());
        assert!(BlockVector::from_flat(2, 3, alloc::vec![0.0; 6]).is_err());
    }
}
