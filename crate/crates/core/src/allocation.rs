//! Splitting a storage budget `s = n·L` between sample count and bytes per sample.
//!
//! Minimizing `A n^(-α) + B L^(-β)` subject to `n·L = s` gives
//! `L* = C s^(α/(α+β))`, `n* = s / L*` with `C = (βB/(αA))^(1/(α+β))`, and the
//! optimized error decays as `s^(-ν)` with `ν = αβ/(α+β)`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fit::{predict, ScalingLawParams};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Optimal,
    FixedLevel,
    OriginalFormat,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Optimal => "optimal",
            Scheme::FixedLevel => "fixed_level",
            Scheme::OriginalFormat => "original_format",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Scheme::Optimal),
            "fixed_level" => Ok(Scheme::FixedLevel),
            "original_format" => Ok(Scheme::OriginalFormat),
            other => Err(Error::DomainError(alloc::format!("unknown allocation scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub s: f64,
    pub n_star: f64,
    #[serde(rename = "L_star")]
    pub l_star: f64,
    /// `floor(n_star)`; the integer plan stores `s / n_int` per sample.
    pub n_int: u64,
    pub predicted_err: f64,
    pub scheme: Scheme,
}

impl Allocation {
    fn at(params: &ScalingLawParams, s: f64, l: f64, scheme: Scheme) -> Result<Self> {
        let n = s / l;
        Ok(Allocation {
            s,
            n_star: n,
            l_star: l,
            n_int: math::floor(n) as u64,
            predicted_err: predict(params, n, l)?,
            scheme,
        })
    }

    /// Bytes per sample when the sample count is rounded down.
    pub fn integer_l(&self) -> Option<f64> {
        (self.n_int > 0).then(|| self.s / self.n_int as f64)
    }
}

fn check_budget(params: &ScalingLawParams, s: f64) -> Result<()> {
    params.validate()?;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::DomainError(alloc::format!("storage budget must be positive, got {s}")));
    }
    Ok(())
}

/// `C = (βB/(αA))^(1/(α+β))`.
pub fn split_constant(params: &ScalingLawParams) -> f64 {
    let ScalingLawParams { a, b, alpha, beta, .. } = *params;
    math::powf(beta * b / (alpha * a), 1.0 / (alpha + beta))
}

/// Closed-form storage-optimal split.
pub fn optimal_allocation(params: &ScalingLawParams, s: f64) -> Result<Allocation> {
    check_budget(params, s)?;
    let l = split_constant(params) * math::powf(s, params.alpha / (params.alpha + params.beta));
    Allocation::at(params, s, l, Scheme::Optimal)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Half-width of the `ln L` search window around `ln s`. The objective is
/// convex in `ln L`, so a coarse scan cannot miss the basin.
const LOG_WINDOW: f64 = 300.0;

/// Numerical split: scan `ln L` on a log grid, then golden-section search
/// between the neighbours of the best grid point.
pub fn brute_force_allocation(params: &ScalingLawParams, s: f64, grid_points: usize) -> Result<Allocation> {
    check_budget(params, s)?;
    if grid_points < 100 {
        return Err(Error::DomainError(alloc::format!("need at least 100 grid points, got {grid_points}")));
    }
    let ScalingLawParams { a, b, alpha, beta, .. } = *params;
    let log_s = math::ln(s);
    let objective = |u: f64| a * math::exp(-alpha * (log_s - u)) + b * math::exp(-beta * u);
    let (lo, hi) = (log_s - LOG_WINDOW, log_s + LOG_WINDOW);
    let step = (hi - lo) / (grid_points - 1) as f64;
    let best = (0..grid_points)
        .map(|i| lo + step * i as f64)
        .map(|u| (u, objective(u)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty grid")
        .0;

    let (mut x0, mut x1) = ((best - step).max(lo), (best + step).min(hi));
    let mut c = x1 - GOLDEN * (x1 - x0);
    let mut d = x0 + GOLDEN * (x1 - x0);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while x1 - x0 > 1e-13 * (1.0 + x0.abs()) {
        if fc < fd {
            x1 = d;
            d = c;
            fd = fc;
            c = x1 - GOLDEN * (x1 - x0);
            fc = objective(c);
        } else {
            x0 = c;
            c = d;
            fc = fd;
            d = x0 + GOLDEN * (x1 - x0);
            fd = objective(d);
        }
    }
    Allocation::at(params, s, math::exp((x0 + x1) / 2.0), Scheme::Optimal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    /// `(s, predicted error at the optimal split)`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log(err − Err*)` against `log s`.
    pub slope: f64,
    /// `αβ/(α+β)`.
    pub nu: f64,
}

pub fn optimized_error_curve(params: &ScalingLawParams, budgets: &[f64]) -> Result<ErrorCurve> {
    params.validate()?;
    if budgets.len() < 4 {
        return Err(Error::DomainError(alloc::format!("need at least 4 budgets, got {}", budgets.len())));
    }
    let (lo, hi) = budgets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if !(lo > 0.0 && hi >= 10.0 * lo) {
        return Err(Error::DomainError("budgets must be positive and span at least one decade".into()));
    }
    let mut points = Vec::with_capacity(budgets.len());
    let mut xs = Vec::with_capacity(budgets.len());
    let mut ys = Vec::with_capacity(budgets.len());
    for &s in budgets {
        let alloc = optimal_allocation(params, s)?;
        let excess = alloc.predicted_err - params.err_star;
        if !(excess > 0.0) {
            return Err(Error::DomainError(alloc::format!(
                "predicted error at s = {s} does not exceed Err*; slope undefined"
            )));
        }
        points.push((s, alloc.predicted_err));
        xs.push(math::ln(s));
        ys.push(math::ln(excess));
    }
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ErrorCurve { points, slope: sxy / sxx, nu: params.storage_exponent() })
}

fn fixed_split(params: &ScalingLawParams, s: f64, l: f64, scheme: Scheme) -> Result<Allocation> {
    check_budget(params, s)?;
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::DomainError(alloc::format!("bytes per sample must be positive, got {l}")));
    }
    if s < l {
        return Err(Error::BudgetTooSmall { budget: s, item: l });
    }
    Allocation::at(params, s, l, scheme)
}

/// Every sample stored at the same size `l_fixed`; the budget sets `n`.
pub fn fixed_level_plan(params: &ScalingLawParams, s: f64, l_fixed: f64) -> Result<Allocation> {
    fixed_split(params, s, l_fixed, Scheme::FixedLevel)
}

/// Samples kept uncompressed and dropped until the budget fits.
pub fn original_format_plan(params: &ScalingLawParams, s: f64, l_original: f64) -> Result<Allocation> {
    fixed_split(params, s, l_original, Scheme::OriginalFormat)
}
