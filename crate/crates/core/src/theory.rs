//! Deterministic-equivalent risk of ridge regression on the truncated model.
//!
//! For truncation level `m`, sample size `n` and penalty `λ`, the effective
//! regularization `λ*` solves
//!
//! ```text
//! n − λ/λ* = Σ_{ℓ≤m} s_ℓ q^ℓ / (s_ℓ + λ*),        s_ℓ = p^(-ℓ)
//! ```
//!
//! and the predicted expected test error is
//! `τ² + B(m, n) + (τ² + tail)·V(m, n) + tail`, with
//!
//! ```text
//! D(m)    = Σ s_ℓ² q^ℓ / (s_ℓ + λ*)²
//! B(m, n) = n λ*² / (n − D) · Σ s_ℓ ‖θ^(ℓ)‖² / (s_ℓ + λ*)²
//! V(m, n) = D / (n − D)
//! tail    = Σ_{ℓ>m} s_ℓ ‖θ^(ℓ)‖²
//! ```
//!
//! Multiplicative corrections that vanish as `n` grows are not modelled.

use alloc::format;

use crate::model::SpectrumConfig;
use crate::ridge::oracle_lambda_grid;
use crate::{Error, Result};

const BISECTION_CAP: usize = 200;
const EXPANSION_CAP: usize = 2100;

/// Assembled deterministic-equivalent prediction for one `(n, m, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentRisk {
    pub lambda: f64,
    pub lambda_star: f64,
    pub dof: f64,
    pub bias: f64,
    pub variance: f64,
    pub tail: f64,
    pub tilde_tau_sq: f64,
    pub total: f64,
}

fn coords_up_to(config: &SpectrumConfig, m: usize) -> f64 {
    (0..=m).map(|l| config.q.pow(l as u32) as f64).sum()
}

/// `F(λ*) = Σ_{ℓ≤m} s_ℓ q^ℓ / (s_ℓ + λ*)`.
pub fn effective_trace(config: &SpectrumConfig, m: usize, lambda_star: f64) -> f64 {
    (0..=m)
        .map(|l| {
            let s = config.level_variance(l);
            s * config.q.pow(l as u32) as f64 / (s + lambda_star)
        })
        .sum()
}

/// `n − λ/λ* − F(λ*)`; zero at the effective regularization. With `λ = 0`
/// the `λ/λ*` term is dropped.
pub fn fixed_point_residual(config: &SpectrumConfig, n: usize, m: usize, lambda: f64, lambda_star: f64) -> f64 {
    let penalty = if lambda == 0.0 { 0.0 } else { lambda / lambda_star };
    n as f64 - penalty - effective_trace(config, m, lambda_star)
}

/// Effective regularization `λ*` by bisection on the increasing map
/// `λ* ↦ n − λ/λ* − F(λ*)`.
///
/// `λ = 0` gives the ridgeless limit: `λ* = 0` when `n ≥ L`, otherwise the
/// root of `n = F(λ*)`.
pub fn solve_lambda_star(config: &SpectrumConfig, n: usize, m: usize, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if n == 0 {
        return Err(Error::DomainError("n must be >= 1".into()));
    }
    if m >= config.m_max {
        return Err(Error::LevelOutOfRange { level: m, min: 0, max: config.m_max - 1 });
    }
    let nf = n as f64;
    let coords = coords_up_to(config, m);
    if lambda == 0.0 && nf >= coords {
        return Ok(0.0);
    }
    let g = |x: f64| fixed_point_residual(config, n, m, lambda, x);
    let failure = || Error::BracketFailure { n: nf, m, lambda };

    let (mut lo, mut hi) = if lambda > 0.0 {
        (lambda / (nf + coords), lambda / (nf - coords).max(1.0) + 1.0)
    } else {
        let hi = 2.0 * effective_trace(config, m, 0.0) / nf;
        (hi, hi)
    };
    let mut steps = 0;
    while !(g(hi) > 0.0) {
        hi *= 2.0;
        steps += 1;
        if steps > EXPANSION_CAP || !hi.is_finite() {
            return Err(failure());
        }
    }
    steps = 0;
    while !(g(lo) < 0.0) {
        lo *= 0.5;
        steps += 1;
        if steps > EXPANSION_CAP || lo == 0.0 {
            return Err(failure());
        }
    }

    for _ in 0..BISECTION_CAP {
        // geometric steps while the bracket spans orders of magnitude
        let mid = if hi > 4.0 * lo { libm::sqrt(lo * hi) } else { 0.5 * (lo + hi) };
        if !(mid > lo && mid < hi) {
            break;
        }
        let value = g(mid);
        if value == 0.0 {
            return Ok(mid);
        }
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if g(lo).abs() <= g(hi).abs() { lo } else { hi })
}

/// `D(m) = Σ_{ℓ≤m} s_ℓ² q^ℓ / (s_ℓ + λ*)²`.
pub fn dof(config: &SpectrumConfig, m: usize, lambda_star: f64) -> f64 {
    (0..=m)
        .map(|l| {
            let s = config.level_variance(l);
            let w = s / (s + lambda_star);
            w * w * config.q.pow(l as u32) as f64
        })
        .sum()
}

fn check_norms(theta_norms: &[f64], levels: usize) -> Result<()> {
    if theta_norms.len() < levels {
        return Err(Error::ShapeMismatch(format!(
            "{} signal norms for {} levels",
            theta_norms.len(),
            levels
        )));
    }
    Ok(())
}

/// `B(m, n) = n λ*² / (n − D) · Σ_{ℓ≤m} s_ℓ ‖θ^(ℓ)‖² / (s_ℓ + λ*)²`.
pub fn bias_term(config: &SpectrumConfig, theta_norms: &[f64], n: usize, m: usize, lambda_star: f64) -> Result<f64> {
    check_norms(theta_norms, m + 1)?;
    let d = dof(config, m, lambda_star);
    let nf = n as f64;
    if !(nf > d) {
        return Err(Error::DegenerateDof { n: nf, dof: d });
    }
    let weighted: f64 = (0..=m)
        .map(|l| {
            let s = config.level_variance(l);
            s * theta_norms[l] / ((s + lambda_star) * (s + lambda_star))
        })
        .sum();
    Ok(nf * lambda_star * lambda_star / (nf - d) * weighted)
}

/// `V = D / (n − D)`.
pub fn variance_term(n: usize, dof: f64) -> Result<f64> {
    let nf = n as f64;
    if !(nf > dof) {
        return Err(Error::DegenerateDof { n: nf, dof });
    }
    Ok(dof / (nf - dof))
}

/// Discarded-signal energy `Σ_{ℓ=m+1}^{m_max−1} (r/p)^ℓ` for the configured spectrum.
pub fn tail_term(config: &SpectrumConfig, m: usize) -> Result<f64> {
    if m >= config.m_max {
        return Err(Error::LevelOutOfRange { level: m, min: 0, max: config.m_max - 1 });
    }
    let ratio = config.r / config.p;
    Ok((m + 1..config.m_max).map(|l| libm::pow(ratio, l as f64)).sum())
}

fn tail_from_norms(config: &SpectrumConfig, theta_norms: &[f64], m: usize) -> f64 {
    (m + 1..config.m_max)
        .map(|l| config.level_variance(l) * theta_norms[l])
        .sum()
}

/// Deterministic-equivalent test error at `(n, m, λ)`. `theta_norms[ℓ]` is
/// `‖θ^(ℓ)‖²` for every simulated level `ℓ < m_max`.
pub fn predicted_error(
    config: &SpectrumConfig,
    theta_norms: &[f64],
    n: usize,
    m: usize,
    lambda: f64,
) -> Result<EquivalentRisk> {
    check_norms(theta_norms, config.m_max)?;
    let lambda_star = solve_lambda_star(config, n, m, lambda)?;
    let d = dof(config, m, lambda_star);
    let bias = bias_term(config, theta_norms, n, m, lambda_star)?;
    let variance = variance_term(n, d)?;
    let tail = tail_from_norms(config, theta_norms, m);
    let tau_sq = config.tau * config.tau;
    let tilde_tau_sq = tau_sq + tail;
    Ok(EquivalentRisk {
        lambda,
        lambda_star,
        dof: d,
        bias,
        variance,
        tail,
        tilde_tau_sq,
        total: tau_sq + bias + tilde_tau_sq * variance + tail,
    })
}

/// Minimum of [`predicted_error`] over the oracle `λ` grid. Grid points where
/// the prediction is undefined are skipped.
pub fn predicted_error_oracle(
    config: &SpectrumConfig,
    theta_norms: &[f64],
    n: usize,
    m: usize,
) -> Result<EquivalentRisk> {
    let mut best: Option<EquivalentRisk> = None;
    let mut last_err = None;
    for lambda in oracle_lambda_grid(config, n, m) {
        match predicted_error(config, theta_norms, n, m, lambda) {
            Ok(risk) if best.map_or(true, |b| risk.total < b.total) => best = Some(risk),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::DegenerateDof { n: n as f64, dof: f64::NAN }))
}
