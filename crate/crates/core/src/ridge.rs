//! Ridge regression on truncated features and its exact test error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::prelude::*;
use faer::{Accum, Side};
use rand_distr::Distribution;

use crate::grid::{Observation, ObservationGrid};
use crate::math;
use crate::model::{self, BlockVector, SpectrumConfig};
use crate::rng::StreamKey;
use crate::{Error, Result};

const FEATURE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Number of points in the oracle regularization grid.
pub const ORACLE_GRID_POINTS: usize = 25;

/// Which linear system to factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveForm {
    /// `(XᵀX + λI) b = Xᵀy`, an `L × L` system.
    Primal,
    /// `b = Xᵀ(XXᵀ + λI)⁻¹ y`, an `n × n` system.
    Dual,
    /// The smaller of the two; primal when `λ = 0`.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    /// Estimated coefficients on levels `0..=m`.
    pub theta_hat: BlockVector,
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
}

/// Stacks `Φ_m(x_i)` as rows of an `n × L` matrix.
pub fn design_matrix(features: &[BlockVector], m: usize) -> Result<Mat<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::DomainError("design matrix needs at least one sample".into()))?;
    if m >= first.level_count() {
        return Err(Error::LevelOutOfRange { level: m, min: 0, max: first.level_count() - 1 });
    }
    if let Some(bad) = features.iter().find(|x| !x.same_structure(first)) {
        return Err(Error::ShapeMismatch(format!(
            "sample with q = {}, levels = {} among q = {}, levels = {}",
            bad.q(),
            bad.level_count(),
            first.q(),
            first.level_count()
        )));
    }
    let cols = model::truncate(first, m)?.len();
    Ok(Mat::from_fn(features.len(), cols, |i, j| features[i].as_slice()[j]))
}

fn gram_of_columns(x: MatRef<'_, f64>) -> Mat<f64> {
    let mut g = Mat::zeros(x.ncols(), x.ncols());
    matmul(g.as_mut(), Accum::Replace, x.transpose(), x, 1.0, Par::Seq);
    g
}

fn gram_of_rows(x: MatRef<'_, f64>) -> Mat<f64> {
    let mut k = Mat::zeros(x.nrows(), x.nrows());
    matmul(k.as_mut(), Accum::Replace, x, x.transpose(), 1.0, Par::Seq);
    k
}

fn column(values: &[f64]) -> Mat<f64> {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

/// Factors a symmetric positive-definite matrix and solves for `rhs`.
/// Pivots below `1e-13` of the largest diagonal are treated as singular.
fn spd_solve(a: Mat<f64>, rhs: Mat<f64>) -> Result<Mat<f64>> {
    let scale = (0..a.nrows()).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let llt = a.llt(Side::Lower).map_err(|_| Error::SingularSystem)?;
    let l = llt.L();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * scale) {
        return Err(Error::SingularSystem);
    }
    Ok(llt.solve(rhs))
}

/// Minimizer of `‖y − Xb‖² + λ‖b‖²`.
pub fn ridge_coefficients(x: MatRef<'_, f64>, y: &[f64], lambda: f64, form: SolveForm) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let (n, l) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {} samples", y.len(), n)));
    }
    if n == 0 {
        return Err(Error::DomainError("ridge fit needs n >= 1".into()));
    }
    let form = match form {
        SolveForm::Auto if lambda == 0.0 || l <= n => SolveForm::Primal,
        SolveForm::Auto => SolveForm::Dual,
        other => other,
    };
    let y = column(y);
    match form {
        SolveForm::Primal => {
            let mut g = gram_of_columns(x);
            for i in 0..l {
                g[(i, i)] += lambda;
            }
            let mut rhs = Mat::zeros(l, 1);
            matmul(rhs.as_mut(), Accum::Replace, x.transpose(), y.as_ref(), 1.0, Par::Seq);
            let b = spd_solve(g, rhs)?;
            Ok((0..l).map(|i| b[(i, 0)]).collect())
        }
        _ => {
            let mut k = gram_of_rows(x);
            for i in 0..n {
                k[(i, i)] += lambda;
            }
            let alpha = spd_solve(k, y)?;
            let mut b = Mat::zeros(l, 1);
            matmul(b.as_mut(), Accum::Replace, x.transpose(), alpha.as_ref(), 1.0, Par::Seq);
            Ok((0..l).map(|i| b[(i, 0)]).collect())
        }
    }
}

/// Fits ridge on `Φ_m` of the given samples.
pub fn fit_ridge(features: &[BlockVector], y: &[f64], m: usize, lambda: f64) -> Result<RidgeFit> {
    let x = design_matrix(features, m)?;
    let coef = ridge_coefficients(x.as_ref(), y, lambda, SolveForm::Auto)?;
    let theta_hat = BlockVector::from_flat(features[0].q(), m + 1, coef)?;
    Ok(RidgeFit { theta_hat, lambda, n: features.len(), m })
}

/// `Σ_{ℓ≤m} p^(-ℓ) ‖θ̂^(ℓ) − θ^(ℓ)‖²` over a flat coefficient vector.
fn estimation_error(config: &SpectrumConfig, theta: &BlockVector, coef: &[f64], m: usize) -> f64 {
    let mut total = 0.0;
    let mut offset = 0;
    for level in 0..=m {
        let truth = theta.block(level);
        let est = &coef[offset..offset + truth.len()];
        let dist: f64 = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
        total += config.level_variance(level) * dist;
        offset += truth.len();
    }
    total
}

/// `Σ_{ℓ>m} p^(-ℓ) ‖θ^(ℓ)‖²`, the part of the signal the compressor discards.
fn discarded_signal(config: &SpectrumConfig, theta: &BlockVector, m: usize) -> f64 {
    (m + 1..theta.level_count())
        .map(|level| config.level_variance(level) * theta.block_norm_sq(level))
        .sum()
}

/// Expected squared error of the fit on a fresh sample from the model:
/// `τ² + Σ_{ℓ≤m} p^(-ℓ)‖θ̂^(ℓ) − θ^(ℓ)‖² + Σ_{ℓ>m} p^(-ℓ)‖θ^(ℓ)‖²`.
pub fn population_test_error(fit: &RidgeFit, theta: &BlockVector, config: &SpectrumConfig) -> Result<f64> {
    let q_ok = fit.theta_hat.q() == config.q && theta.q() == config.q;
    if !q_ok || theta.level_count() != config.m_max || fit.theta_hat.level_count() != fit.m + 1 {
        return Err(Error::ShapeMismatch(format!(
            "fit (q = {}, {} levels), theta (q = {}, {} levels), config (q = {}, m_max = {})",
            fit.theta_hat.q(),
            fit.theta_hat.level_count(),
            theta.q(),
            theta.level_count(),
            config.q,
            config.m_max
        )));
    }
    if fit.m >= config.m_max {
        return Err(Error::LevelOutOfRange { level: fit.m, min: 0, max: config.m_max - 1 });
    }
    Ok(config.tau * config.tau
        + estimation_error(config, theta, fit.theta_hat.as_slice(), fit.m)
        + discarded_signal(config, theta, fit.m))
}

/// Ridge solutions for many `λ` from a single eigendecomposition of the
/// smaller Gram matrix: `b(λ) = W · diag(1/(σ + λ)) · c`.
pub struct RidgePath {
    eigenvalues: Vec<f64>,
    basis: Mat<f64>,
    coeff: Vec<f64>,
}

impl RidgePath {
    pub fn new(x: MatRef<'_, f64>, y: &[f64]) -> Result<Self> {
        let (n, l) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::ShapeMismatch(format!("{} labels for {} samples", y.len(), n)));
        }
        let y = column(y);
        let evd_failed = |_| Error::DomainError("eigendecomposition did not converge".into());
        if l <= n {
            // XᵀX = V Σ Vᵀ, c = Vᵀ Xᵀ y
            let evd = gram_of_columns(x).self_adjoint_eigen(Side::Lower).map_err(evd_failed)?;
            let v = evd.U().to_owned();
            let mut xty = Mat::zeros(l, 1);
            matmul(xty.as_mut(), Accum::Replace, x.transpose(), y.as_ref(), 1.0, Par::Seq);
            let mut c = Mat::zeros(l, 1);
            matmul(c.as_mut(), Accum::Replace, v.transpose(), xty.as_ref(), 1.0, Par::Seq);
            Ok(RidgePath {
                eigenvalues: evd.S().column_vector().iter().map(|s| s.max(0.0)).collect(),
                basis: v,
                coeff: (0..l).map(|i| c[(i, 0)]).collect(),
            })
        } else {
            // XXᵀ = U Σ Uᵀ, W = Xᵀ U, d = Uᵀ y
            let evd = gram_of_rows(x).self_adjoint_eigen(Side::Lower).map_err(evd_failed)?;
            let u = evd.U();
            let mut w = Mat::zeros(l, n);
            matmul(w.as_mut(), Accum::Replace, x.transpose(), u, 1.0, Par::Seq);
            let mut d = Mat::zeros(n, 1);
            matmul(d.as_mut(), Accum::Replace, u.transpose(), y.as_ref(), 1.0, Par::Seq);
            Ok(RidgePath {
                eigenvalues: evd.S().column_vector().iter().map(|s| s.max(0.0)).collect(),
                basis: w,
                coeff: (0..n).map(|i| d[(i, 0)]).collect(),
            })
        }
    }

    pub fn coefficients(&self, lambda: f64) -> Vec<f64> {
        let scaled: Vec<f64> = self
            .coeff
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, s)| if s + lambda > 0.0 { c / (s + lambda) } else { 0.0 })
            .collect();
        let mut out = Mat::zeros(self.basis.nrows(), 1);
        matmul(out.as_mut(), Accum::Replace, self.basis.as_ref(), column(&scaled).as_ref(), 1.0, Par::Seq);
        (0..self.basis.nrows()).map(|i| out[(i, 0)]).collect()
    }
}

/// How the regularization strength is chosen for a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// `λ = n^((κ+1)/(2κ+1))`, `κ = log p / log q`.
    Theorem,
    /// `λ = n^(1−κ)`, the lower end of the range where the deterministic
    /// equivalent is stated.
    LemmaBound,
    /// `λ = n^(−κ)`, the scale used when checking the deterministic equivalent.
    LemmaProof,
    /// Per replicate, the grid point minimizing the population test error.
    OracleGrid,
}

impl LambdaPolicy {
    /// The fixed `λ` for non-oracle policies.
    pub fn scheduled(&self, config: &SpectrumConfig, n: usize) -> Option<f64> {
        let n = n as f64;
        let kappa = config.kappa();
        match *self {
            LambdaPolicy::Fixed(l) => Some(l),
            LambdaPolicy::Theorem => Some(math::powf(n, (kappa + 1.0) / (2.0 * kappa + 1.0))),
            LambdaPolicy::LemmaBound => Some(math::powf(n, 1.0 - kappa)),
            LambdaPolicy::LemmaProof => Some(math::powf(n, -kappa)),
            LambdaPolicy::OracleGrid => None,
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Fixed(l) => write!(f, "fixed:{l}"),
            LambdaPolicy::Theorem => f.write_str("theorem"),
            LambdaPolicy::LemmaBound => f.write_str("lemma-bound"),
            LambdaPolicy::LemmaProof => f.write_str("lemma-proof"),
            LambdaPolicy::OracleGrid => f.write_str("oracle-grid"),
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    /// Accepts `theorem`, `lemma-bound`, `lemma-proof`, `oracle-grid`,
    /// `fixed:<value>` or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::DomainError(format!("unknown lambda policy `{s}`"));
        let policy = match s.trim() {
            "theorem" => LambdaPolicy::Theorem,
            "lemma-bound" => LambdaPolicy::LemmaBound,
            "lemma-proof" => LambdaPolicy::LemmaProof,
            "oracle-grid" | "oracle" => LambdaPolicy::OracleGrid,
            other => {
                let value = other.strip_prefix("fixed:").unwrap_or(other);
                let lambda: f64 = value.parse().map_err(|_| bad())?;
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::NonPositiveLambda(lambda));
                }
                LambdaPolicy::Fixed(lambda)
            }
        };
        Ok(policy)
    }
}

/// 25 log-spaced values over `[1e-6, 1e2] · n p^(-m_eff)`, `m_eff = min(m, log_q n)`.
pub fn oracle_lambda_grid(config: &SpectrumConfig, n: usize, m: usize) -> Vec<f64> {
    let m_eff = (m as f64).min(math::ln(n as f64) / math::ln(config.q as f64));
    let center = n as f64 * math::powf(config.p, -m_eff);
    math::log_space(1e-6 * center, 1e2 * center, ORACLE_GRID_POINTS)
}

/// Monte Carlo summary of one `(n, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub m: usize,
    /// Stored coordinates `L`.
    pub coords: usize,
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
    /// Geometric mean of the `λ` used across replicates.
    pub lambda: f64,
    /// Replicates whose oracle choice sat on an end of the grid.
    pub grid_edge_hits: usize,
}

impl CellResult {
    pub fn observation(&self) -> Observation {
        Observation {
            n: self.n as u64,
            l: self.coords as f64,
            err: self.mean,
            stderr: Some(self.stderr),
            replicates: Some(self.replicates as u32),
        }
    }
}

/// Draws one training set: the `n × L` design of `Φ_m(x_i)` and labels built
/// from the full (untruncated) inner product. Identical to
/// [`model::sample_features`] with `key/0` followed by [`model::sample_labels`]
/// with the stream `key/1`.
pub fn draw_training_set(
    config: &SpectrumConfig,
    theta: &BlockVector,
    n: usize,
    m: usize,
    key: StreamKey,
) -> Result<(Mat<f64>, Vec<f64>)> {
    let coords = model::stored_coords(config, m)?;
    let feature_key = key.child(FEATURE_STREAM);
    let noise = model::noise_distribution(config.tau)?;
    let mut noise_rng = key.child(NOISE_STREAM).rng();
    let mut x = Mat::zeros(n, coords);
    let mut y = Vec::with_capacity(n);
    let mut buf = vec![0.0; config.q.pow(config.m_max as u32 - 1)];
    for i in 0..n {
        let mut signal = 0.0;
        let mut col = 0;
        for level in 0..config.m_max {
            let width = config.q.pow(level as u32);
            let block = &mut buf[..width];
            let mut rng = model::feature_stream(feature_key, i, level).rng();
            model::fill_level(config, level, &mut rng, block);
            for (v, t) in block.iter().zip(theta.block(level)) {
                signal += v * t;
            }
            if level <= m {
                for &v in block.iter() {
                    x[(i, col)] = v;
                    col += 1;
                }
            }
        }
        y.push(signal + noise.sample(&mut noise_rng));
    }
    Ok((x, y))
}

/// Runs `replicates` independent training sets at `(n, m)`; replicate `k`
/// draws from `key/k`.
pub fn simulate_cell(
    config: &SpectrumConfig,
    n: usize,
    m: usize,
    policy: LambdaPolicy,
    replicates: usize,
    key: StreamKey,
) -> Result<CellResult> {
    let theta = model::make_ground_truth(config);
    simulate_cell_with(config, &theta, n, m, policy, replicates, key)
}

/// [`simulate_cell`] with an explicit ground truth over all `m_max` levels.
pub fn simulate_cell_with(
    config: &SpectrumConfig,
    theta: &BlockVector,
    n: usize,
    m: usize,
    policy: LambdaPolicy,
    replicates: usize,
    key: StreamKey,
) -> Result<CellResult> {
    config.validate()?;
    if replicates < 1 || n < 1 {
        return Err(Error::DomainError(format!("need n >= 1 and replicates >= 1, got {n}, {replicates}")));
    }
    if theta.q() != config.q || theta.level_count() != config.m_max {
        return Err(Error::ShapeMismatch(format!(
            "theta has q = {}, {} levels; config has q = {}, m_max = {}",
            theta.q(),
            theta.level_count(),
            config.q,
            config.m_max
        )));
    }
    let coords = model::stored_coords(config, m)?;
    let base = config.tau * config.tau + discarded_signal(config, theta, m);
    let grid = oracle_lambda_grid(config, n, m);

    let mut errors = Vec::with_capacity(replicates);
    let mut log_lambda = 0.0;
    let mut edge_hits = 0;
    for rep in 0..replicates {
        let (x, y) = draw_training_set(config, theta, n, m, key.child(rep as u64))?;
        let (err, lambda) = match policy.scheduled(config, n) {
            Some(lambda) => {
                let coef = ridge_coefficients(x.as_ref(), &y, lambda, SolveForm::Auto)?;
                (base + estimation_error(config, theta, &coef, m), lambda)
            }
            None => {
                let path = RidgePath::new(x.as_ref(), &y)?;
                let mut best = (f64::INFINITY, 0);
                for (idx, &lambda) in grid.iter().enumerate() {
                    let e = estimation_error(config, theta, &path.coefficients(lambda), m);
                    if e < best.0 {
                        best = (e, idx);
                    }
                }
                if best.1 == 0 || best.1 == grid.len() - 1 {
                    edge_hits += 1;
                }
                (base + best.0, grid[best.1])
            }
        };
        errors.push(err);
        log_lambda += math::ln(lambda.max(f64::MIN_POSITIVE));
    }
    let (mean, stderr) = mean_stderr(&errors);
    Ok(CellResult {
        n,
        m,
        coords,
        mean,
        stderr,
        replicates,
        lambda: math::exp(log_lambda / replicates as f64),
        grid_edge_hits: edge_hits,
    })
}

pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, math::sqrt(var / k))
}

/// Stream key of the cell at positions `(n_index, m_index)` of a sweep.
pub fn cell_key(seed: u64, n_index: usize, m_index: usize) -> StreamKey {
    StreamKey::new(seed).child(n_index as u64).child(m_index as u64)
}

/// Validates sweep inputs; shared with parallel drivers.
pub fn check_sweep(config: &SpectrumConfig, n_list: &[usize], m_list: &[usize]) -> Result<()> {
    config.validate()?;
    if n_list.is_empty() || m_list.is_empty() {
        return Err(Error::DomainError("sweep needs non-empty n and m lists".into()));
    }
    if let Some(&m) = m_list.iter().find(|&&m| m >= config.m_max) {
        return Err(Error::LevelOutOfRange { level: m, min: 0, max: config.m_max - 1 });
    }
    Ok(())
}

/// Sequential sweep over `n_list × m_list`, one row per cell in n-major order.
pub fn sweep_cells(
    config: &SpectrumConfig,
    n_list: &[usize],
    m_list: &[usize],
    policy: LambdaPolicy,
    replicates: usize,
    seed: u64,
) -> Result<Vec<CellResult>> {
    check_sweep(config, n_list, m_list)?;
    let mut cells = Vec::with_capacity(n_list.len() * m_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        for (mi, &m) in m_list.iter().enumerate() {
            cells.push(simulate_cell(config, n, m, policy, replicates, cell_key(seed, ni, mi))?);
        }
    }
    Ok(cells)
}

/// [`sweep_cells`] collected into an observation grid.
pub fn sweep(
    config: &SpectrumConfig,
    n_list: &[usize],
    m_list: &[usize],
    policy: LambdaPolicy,
    replicates: usize,
    seed: u64,
) -> Result<ObservationGrid> {
    cells_to_grid(&sweep_cells(config, n_list, m_list, policy, replicates, seed)?)
}

pub fn cells_to_grid(cells: &[CellResult]) -> Result<ObservationGrid> {
    ObservationGrid::new(cells.iter().map(CellResult::observation).collect())
}
