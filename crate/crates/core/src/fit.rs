//! Fitting `Err(n, L) = Err* + A·n^(-α) + B·L^(-β)` to an observation grid.
//!
//! The linear parameters `(Err*, A, B)` are projected out: for fixed
//! exponents they solve a non-negative least-squares problem on three
//! columns, so the search only runs over `(α, β)`. A log-spaced multi-start
//! grid picks the basin and Nelder–Mead in log-exponent space refines it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::ObservationGrid;
use crate::math;
use crate::model::SpectrumConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingLawParams {
    pub err_star: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ScalingLawParams {
    pub fn new(err_star: f64, a: f64, b: f64, alpha: f64, beta: f64) -> Self {
        ScalingLawParams { err_star, a, b, alpha, beta }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.err_star, self.a, self.b, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.err_star >= 0.0 && self.a > 0.0 && self.b > 0.0 && self.alpha > 0.0 && self.beta > 0.0 {
            Ok(())
        } else {
            Err(Error::DomainError(alloc::format!(
                "scaling law needs finite Err* >= 0 and A, B, alpha, beta > 0: {self:?}"
            )))
        }
    }

    /// Harmonic-mean exponent `ν = αβ/(α+β)` of the storage-optimal error.
    pub fn storage_exponent(&self) -> f64 {
        self.alpha * self.beta / (self.alpha + self.beta)
    }
}

/// `Err* + A n^(-α) + B L^(-β)`.
pub fn predict(params: &ScalingLawParams, n: f64, l: f64) -> Result<f64> {
    if !(n > 0.0 && l > 0.0) {
        return Err(Error::DomainError(alloc::format!("n and L must be positive, got n = {n}, L = {l}")));
    }
    Ok(params.err_star + params.a * math::powf(n, -params.alpha) + params.b * math::powf(l, -params.beta))
}

/// `α = 2 log p / (2 log p + log q)` and `β = log(p/r) / log q`.
pub fn theoretical_exponents(config: &SpectrumConfig) -> (f64, f64) {
    let (lp, lq) = (math::ln(config.p), math::ln(config.q as f64));
    (2.0 * lp / (2.0 * lp + lq), math::ln(config.p / config.r) / lq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Starts per exponent axis.
    pub grid_points: usize,
    pub exponent_min: f64,
    pub exponent_max: f64,
    /// Weight rows by `1/stderr²` when every row carries a positive stderr.
    pub use_stderr_weights: bool,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid_points: 20,
            exponent_min: 0.01,
            exponent_max: 4.0,
            use_stderr_weights: true,
            max_iterations: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ScalingLawParams,
    pub rss: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub starts_tried: usize,
}

struct Problem {
    n: Vec<f64>,
    l: Vec<f64>,
    y: Vec<f64>,
    sqrt_w: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Inner {
    coef: [f64; 3],
    rss: f64,
}

impl Problem {
    fn from_grid(grid: &ObservationGrid, options: &FitOptions) -> Self {
        let rows = grid.rows();
        let weighted = options.use_stderr_weights
            && rows.iter().all(|r| r.stderr.map_or(false, |s| s > 0.0));
        Problem {
            n: rows.iter().map(|r| r.n as f64).collect(),
            l: rows.iter().map(|r| r.l).collect(),
            y: rows.iter().map(|r| r.err).collect(),
            sqrt_w: rows
                .iter()
                .map(|r| if weighted { 1.0 / r.stderr.unwrap() } else { 1.0 })
                .collect(),
        }
    }

    /// Best non-negative `(Err*, A, B)` for fixed exponents.
    fn solve_inner(&self, alpha: f64, beta: f64) -> Inner {
        let cols: [Vec<f64>; 3] = [
            self.sqrt_w.clone(),
            self.n.iter().zip(&self.sqrt_w).map(|(n, w)| w * math::powf(*n, -alpha)).collect(),
            self.l.iter().zip(&self.sqrt_w).map(|(l, w)| w * math::powf(*l, -beta)).collect(),
        ];
        let target: Vec<f64> = self.y.iter().zip(&self.sqrt_w).map(|(y, w)| y * w).collect();
        nnls3(&cols, &target)
    }

    fn objective(&self, log_alpha: f64, log_beta: f64) -> f64 {
        self.solve_inner(math::exp(log_alpha), math::exp(log_beta)).rss
    }

    fn total_sum_of_squares(&self) -> f64 {
        let wsum: f64 = self.sqrt_w.iter().map(|w| w * w).sum();
        let mean = self.y.iter().zip(&self.sqrt_w).map(|(y, w)| w * w * y).sum::<f64>() / wsum;
        self.y.iter().zip(&self.sqrt_w).map(|(y, w)| w * w * (y - mean) * (y - mean)).sum()
    }
}

/// Least squares on the listed columns through a modified Gram–Schmidt QR.
/// `None` when the columns are numerically dependent.
fn least_squares(cols: &[&[f64]], target: &[f64]) -> Option<Vec<f64>> {
    let k = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = [[0.0f64; 3]; 3];
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.to_vec();
        let norm0 = math::sqrt(dot(&v, &v));
        if norm0 == 0.0 {
            return None;
        }
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                r[i][j] += c;
                v.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = math::sqrt(dot(&v, &v));
        if norm <= 1e-13 * norm0 {
            return None;
        }
        r[j][j] = norm;
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, target)).collect();
    let mut coef = alloc::vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r[i][j] * coef[j]).sum();
        coef[i] = (qty[i] - s) / r[i][i];
    }
    Some(coef)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact non-negative least squares on three columns: the optimum is the
/// unconstrained solution on its own support, so every feasible support is
/// tried and the smallest residual kept.
fn nnls3(cols: &[Vec<f64>; 3], target: &[f64]) -> Inner {
    let mut best = Inner { coef: [0.0; 3], rss: dot(target, target) };
    for mask in 1u8..8 {
        let support: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<&[f64]> = support.iter().map(|&i| cols[i].as_slice()).collect();
        let Some(c) = least_squares(&sub, target) else { continue };
        if c.iter().any(|v| *v < 0.0) {
            continue;
        }
        let mut coef = [0.0; 3];
        for (&i, v) in support.iter().zip(&c) {
            coef[i] = *v;
        }
        let rss: f64 = (0..target.len())
            .map(|row| {
                let fitted: f64 = (0..3).map(|i| coef[i] * cols[i][row]).sum();
                (target[row] - fitted) * (target[row] - fitted)
            })
            .sum();
        if rss < best.rss {
            best = Inner { coef, rss };
        }
    }
    best
}

/// Nelder–Mead over a box. Returns the best vertex, its value and whether the
/// simplex collapsed below `x_tol` before the iteration cap.
fn nelder_mead<F: Fn(f64, f64) -> f64>(
    f: &F,
    start: [f64; 2],
    step: f64,
    lo: f64,
    hi: f64,
    max_iter: usize,
    x_tol: f64,
) -> ([f64; 2], f64, bool) {
    let clamp = |p: [f64; 2]| [p[0].clamp(lo, hi), p[1].clamp(lo, hi)];
    let eval = |p: [f64; 2]| {
        let v = f(p[0], p[1]);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let mut simplex = [
        start,
        clamp([start[0] + step, start[1]]),
        clamp([start[0], start[1] + step]),
    ];
    if simplex[1] == start {
        simplex[1] = clamp([start[0] - step, start[1]]);
    }
    if simplex[2] == start {
        simplex[2] = clamp([start[0], start[1] - step]);
    }
    let mut values = simplex.map(eval);
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let diameter = (1..3)
            .map(|i| (simplex[i][0] - simplex[0][0]).abs().max((simplex[i][1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if diameter < x_tol {
            return (simplex[0], values[0], true);
        }

        let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let along = |t: f64| clamp([
            centroid[0] + t * (simplex[2][0] - centroid[0]),
            centroid[1] + t * (simplex[2][1] - centroid[1]),
        ]);
        let reflected = along(-1.0);
        let fr = eval(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = eval(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = eval(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                    ];
                    values[i] = eval(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best], false)
}

/// Fits the five-parameter scaling law by weighted least squares in error units.
pub fn fit(grid: &ObservationGrid, options: &FitOptions) -> Result<FitReport> {
    let (rows, distinct_n, distinct_l) = (grid.len(), grid.distinct_n(), grid.distinct_l());
    if rows < 5 || distinct_n < 2 || distinct_l < 2 {
        return Err(Error::InsufficientGrid { rows, distinct_n, distinct_l });
    }
    let errs = grid.rows().iter().map(|r| r.err);
    let (lo_err, hi_err) = errs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
    if hi_err - lo_err <= 1e-15 * hi_err.abs() {
        return Err(Error::DegenerateFit);
    }
    if !(options.exponent_min > 0.0 && options.exponent_max > options.exponent_min && options.grid_points >= 2) {
        return Err(Error::DomainError("invalid exponent search box".into()));
    }

    let problem = Problem::from_grid(grid, options);
    let axis = math::log_space(options.exponent_min, options.exponent_max, options.grid_points);

    // (rss, alpha, beta); ties go to the flatter extrapolation (smaller α + β)
    let mut best: Option<(f64, f64, f64)> = None;
    for &alpha in &axis {
        for &beta in &axis {
            let rss = problem.solve_inner(alpha, beta).rss;
            let better = match best {
                None => true,
                Some((b_rss, b_a, b_b)) => {
                    let tol = 1e-12 * b_rss.abs().max(f64::MIN_POSITIVE);
                    rss < b_rss - tol || ((rss - b_rss).abs() <= tol && alpha + beta < b_a + b_b)
                }
            };
            if better {
                best = Some((rss, alpha, beta));
            }
        }
    }
    let (grid_rss, alpha0, beta0) = best.expect("non-empty start grid");

    let (lo, hi) = (math::ln(options.exponent_min), math::ln(options.exponent_max));
    let step = (hi - lo) / (options.grid_points - 1) as f64;
    let objective = |a: f64, b: f64| problem.objective(a, b);
    let mut point = [math::ln(alpha0), math::ln(beta0)];
    let mut value = grid_rss;
    let mut converged = false;
    // restarts shake Nelder–Mead out of premature collapse in narrow valleys
    let mut restart_step = step;
    for _ in 0..4 {
        let (p, v, ok) = nelder_mead(&objective, point, restart_step, lo, hi, options.max_iterations, 1e-11);
        if v <= value {
            point = p;
            value = v;
        }
        converged = ok;
        restart_step = (restart_step * 0.1).max(1e-6);
    }

    let (alpha, beta) = (math::exp(point[0]), math::exp(point[1]));
    let inner = problem.solve_inner(alpha, beta);
    let params = ScalingLawParams::new(inner.coef[0], inner.coef[1], inner.coef[2], alpha, beta);
    let tss = problem.total_sum_of_squares();
    Ok(FitReport {
        params,
        rss: inner.rss,
        r_squared: if tss > 0.0 { 1.0 - inner.rss / tss } else { 1.0 },
        n_obs: rows,
        converged,
        starts_tried: axis.len() * axis.len(),
    })
}
