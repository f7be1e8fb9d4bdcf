//! Lasso on the stacked system by cyclic coordinate descent.
//!
//! Objective: `‖𝕐 − 𝕏Φ‖² + λ Σⱼ wⱼ|Φⱼ|`, with no `1/N` factor. The plain
//! solver uses unit weights. With column standardization (the path default),
//! `wⱼ` is the root-mean-square of column `j`. That is the same problem as
//! fitting unit-variance columns and mapping the coefficients back to the
//! original scale.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::CoefficientEstimate;
use crate::error::{Error, Result};
use crate::stacking::StackedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoPathConfig {
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    /// Convergence threshold on `‖𝕏ⱼ‖·|ΔΦⱼ|` over a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Penalize each column by its root-mean-square (standardized fitting).
    pub standardize: bool,
}

impl Default for LassoPathConfig {
    fn default() -> Self {
        LassoPathConfig {
            n_lambdas: 100,
            lambda_min_ratio: 1e-3,
            cv_folds: 10,
            tolerance: 1e-7,
            max_sweeps: 10_000,
            standardize: true,
        }
    }
}

impl LassoPathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambdas < 2 {
            return Err(Error::InvalidArgument("n_lambdas must be at least 2".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_min_ratio {} must lie in (0, 1)",
                self.lambda_min_ratio
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidArgument("cv_folds must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "tolerance and max_sweeps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Solver output with its convergence record.
#[derive(Debug, Clone)]
pub struct CdReport {
    pub estimate: CoefficientEstimate,
    pub sweeps: usize,
    /// Objective value after each sweep.
    pub objective_trace: Vec<f64>,
    pub max_kkt_violation: f64,
}

#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    pub estimate: CoefficientEstimate,
}

#[derive(Debug, Clone)]
pub struct CvSelection {
    pub lambda_opt: f64,
    pub estimate: CoefficientEstimate,
    /// Mean held-out squared error per stacked row, one entry per grid point.
    pub cv_curve: Vec<(f64, f64)>,
}

pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z.abs() <= threshold * (1.0 + 1e-12) {
        0.0
    } else {
        z - threshold * z.signum()
    }
}

/// Per-column penalty factors: all ones, or column root-mean-squares.
pub fn penalty_weights(system: &StackedSystem, standardize: bool) -> Vec<f64> {
    let n = system.n_total() as f64;
    system
        .column_norms_sq()
        .iter()
        .map(|&sq| {
            if standardize && sq > 0.0 {
                (sq / n).sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Smallest λ at which Φ = 0 is optimal: `2·maxⱼ |𝕏ⱼᵀ𝕐| / wⱼ`.
pub fn lambda_max(system: &StackedSystem, weights: &[f64]) -> Result<f64> {
    let xty = system.apply_transpose(system.y().as_slice())?;
    Ok(xty
        .iter()
        .zip(weights)
        .map(|(g, w)| 2.0 * g.abs() / w)
        .fold(0.0, f64::max))
}

/// Log-spaced grid from `lambda_max` down to `lambda_max · lambda_min_ratio`.
pub fn lambda_grid(lambda_max: f64, config: &LassoPathConfig) -> Vec<f64> {
    let last = (config.n_lambdas - 1) as f64;
    (0..config.n_lambdas)
        .map(|k| lambda_max * config.lambda_min_ratio.powf(k as f64 / last))
        .collect()
}

fn objective(residual: &DVector<f64>, phi: &[f64], lambda: f64, weights: &[f64]) -> f64 {
    let l1: f64 = phi.iter().zip(weights).map(|(v, w)| w * v.abs()).sum();
    residual.norm_squared() + lambda * l1
}

fn kkt_from_gradient(
    xr: &DVector<f64>,
    phi: &[f64],
    lambda: f64,
    weights: &[f64],
    norms: &[f64],
) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..phi.len() {
        if norms[j] == 0.0 {
            continue;
        }
        let grad = 2.0 * xr[j];
        let bound = lambda * weights[j];
        let tol = 1e-6 * (1.0 + bound);
        let excess = if phi[j] != 0.0 {
            (grad - bound * phi[j].signum()).abs()
        } else {
            (grad.abs() - bound).max(0.0)
        };
        worst = worst.max(excess / tol);
    }
    worst
}

/// Largest stationarity violation relative to the `1e-6·(1 + λwⱼ)` tolerance;
/// values ≤ 1 certify the solution.
pub fn kkt_violation(
    system: &StackedSystem,
    phi: &[f64],
    lambda: f64,
    weights: &[f64],
) -> Result<f64> {
    let r = system.residual(phi)?;
    let xr = system.apply_transpose(r.as_slice())?;
    Ok(kkt_from_gradient(
        &xr,
        phi,
        lambda,
        weights,
        system.column_norms_sq(),
    ))
}

/// Unit-weight lasso at a single λ with default convergence settings.
pub fn coordinate_descent(
    system: &StackedSystem,
    lambda: f64,
    warm_start: &[f64],
) -> Result<CoefficientEstimate> {
    let weights = vec![1.0; system.n_cols()];
    let config = LassoPathConfig::default();
    Ok(coordinate_descent_with(system, lambda, warm_start, &weights, &config)?.estimate)
}

/// Weighted lasso at a single λ.
///
/// Alternates full sweeps with sweeps over the current nonzeros until a full
/// sweep moves nothing beyond tolerance, then certifies the KKT conditions;
/// an uncertified solution tightens the tolerance and keeps going.
pub fn coordinate_descent_with(
    system: &StackedSystem,
    lambda: f64,
    warm_start: &[f64],
    weights: &[f64],
    config: &LassoPathConfig,
) -> Result<CdReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be a finite non-negative number, got {lambda}"
        )));
    }
    let n_cols = system.n_cols();
    for (what, len) in [("warm start", warm_start.len()), ("weights", weights.len())] {
        if len != n_cols {
            return Err(Error::DimensionMismatch {
                context: what.into(),
                expected: n_cols,
                found: len,
            });
        }
    }

    let norms = system.column_norms_sq();
    let mut phi = warm_start.to_vec();
    for j in 0..n_cols {
        if norms[j] == 0.0 {
            phi[j] = 0.0;
        }
    }
    let mut r = system.residual(&phi)?;
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut tol = config.tolerance;

    let update = |j: usize, phi: &mut [f64], r: &mut DVector<f64>| -> f64 {
        let a = norms[j];
        if a == 0.0 {
            return 0.0;
        }
        let old = phi[j];
        let z = system.column_dot(j, r) + a * old;
        let new = soft_threshold(z, 0.5 * lambda * weights[j]) / a;
        if new != old {
            system.column_axpy(j, old - new, r);
            phi[j] = new;
        }
        (new - old).abs() * a.sqrt()
    };

    let all: Vec<usize> = (0..n_cols).collect();
    let certified = |phi: Vec<f64>, r: DVector<f64>, sweeps: usize, trace: Vec<f64>| {
        let xr = system.apply_transpose(r.as_slice())?;
        let violation = kkt_from_gradient(&xr, &phi, lambda, weights, norms);
        Ok::<_, Error>((violation <= 1.0).then(|| CdReport {
            estimate: CoefficientEstimate::new(phi, r.norm_squared(), false),
            sweeps,
            objective_trace: trace,
            max_kkt_violation: violation,
        }))
    };
    let accept_polish = |phi: &mut Vec<f64>, r: &mut DVector<f64>, trace: &mut Vec<f64>| -> Result<()> {
        if let Some((p, res)) = polish(system, phi, lambda, weights)? {
            let f = objective(&res, &p, lambda, weights);
            let before = objective(r, phi, lambda, weights);
            if f <= before + 1e-12 * before.abs() {
                *phi = p;
                *r = res;
                trace.push(f);
            }
        }
        Ok(())
    };
    loop {
        let full_change = all
            .iter()
            .map(|&j| update(j, &mut phi, &mut r))
            .fold(0.0, f64::max);
        sweeps += 1;
        trace.push(objective(&r, &phi, lambda, weights));

        if full_change < tol {
            // recompute the residual from scratch before certifying
            r = system.residual(&phi)?;
            if let Some(done) = certified(phi.clone(), r.clone(), sweeps, trace.clone())? {
                return Ok(done);
            }
            accept_polish(&mut phi, &mut r, &mut trace)?;
            if let Some(done) = certified(phi.clone(), r.clone(), sweeps, trace.clone())? {
                return Ok(done);
            }
            tol = (tol * 0.1).max(MIN_TOLERANCE);
        }

        loop {
            if sweeps >= config.max_sweeps {
                r = system.residual(&phi)?;
                if let Some(done) = certified(phi.clone(), r.clone(), sweeps, trace.clone())? {
                    return Ok(done);
                }
                let violation = kkt_violation(system, &phi, lambda, weights)?;
                return Err(Error::NotConverged {
                    lambda,
                    sweeps,
                    max_violation: violation,
                    last_iterate: phi,
                });
            }
            let active: Vec<usize> = (0..n_cols).filter(|&j| phi[j] != 0.0).collect();
            if active.is_empty() {
                break;
            }
            let change = active
                .iter()
                .map(|&j| update(j, &mut phi, &mut r))
                .fold(0.0, f64::max);
            sweeps += 1;
            trace.push(objective(&r, &phi, lambda, weights));
            if change < tol {
                break;
            }
            if sweeps % POLISH_EVERY == 0 {
                accept_polish(&mut phi, &mut r, &mut trace)?;
                if let Some(done) = certified(phi.clone(), r.clone(), sweeps, trace.clone())? {
                    return Ok(done);
                }
                break;
            }
        }
    }
}

/// Floor for the sweep-change tolerance after failed certifications.
const MIN_TOLERANCE: f64 = 1e-13;

/// Sweeps between exact active-set solves inside the active-set loop.
const POLISH_EVERY: usize = 20;

/// Exact solve on the current nonzero set with its signs held fixed:
/// `𝕏_Aᵀ𝕏_A Φ_A = 𝕏_Aᵀ𝕐 − (λ/2) w_A∘s_A`. When the solution flips a sign, the
/// iterate moves toward it only up to the first zero crossing, drops that
/// coordinate and solves again; the objective never increases along the way.
/// Returns `None` when no step was possible.
fn polish(
    system: &StackedSystem,
    phi: &[f64],
    lambda: f64,
    weights: &[f64],
) -> Result<Option<(Vec<f64>, DVector<f64>)>> {
    let mut cur = phi.to_vec();
    let mut moved = false;
    // coordinates only ever leave the nonzero set, so everything is sliced
    // from the products over the starting one
    let start: Vec<usize> = (0..cur.len()).filter(|&j| cur[j] != 0.0).collect();
    if start.is_empty() {
        return Ok(None);
    }
    let full = system.submatrix(&start);
    let gram = full.tr_mul(&full);
    let xty = full.tr_mul(system.y());
    for _ in 0..=phi.len() {
        let pos: Vec<usize> = (0..start.len()).filter(|&k| cur[start[k]] != 0.0).collect();
        if pos.is_empty() {
            break;
        }
        let active: Vec<usize> = pos.iter().map(|&k| start[k]).collect();
        let chol = if active.len() <= system.n_total() {
            gram.select_rows(&pos).select_columns(&pos).cholesky()
        } else {
            None
        };
        let Some(chol) = chol else {
            // dependent columns: slide along null directions of 𝕏_A, which
            // keep the fit and lower the penalty, until coordinates hit zero
            let mut basis = null_basis(&full.select_columns(&pos));
            if basis.ncols() == 0 {
                break;
            }
            let mut live: Vec<usize> = (0..active.len()).collect();
            while basis.ncols() > 0 {
                let d = basis.column(0).clone_owned();
                let slope: f64 = live
                    .iter()
                    .map(|&k| weights[active[k]] * cur[active[k]].signum() * d[k])
                    .sum();
                let d = if slope > 0.0 { -d } else { d };
                let mut step = f64::INFINITY;
                let mut hit = None;
                for &k in &live {
                    let j = active[k];
                    if d[k] * cur[j].signum() < 0.0 {
                        let t = -cur[j] / d[k];
                        if t < step {
                            step = t;
                            hit = Some(k);
                        }
                    }
                }
                let Some(hit) = hit else {
                    break;
                };
                for &k in &live {
                    let j = active[k];
                    let next = cur[j] + step * d[k];
                    cur[j] = if k == hit || next.signum() != cur[j].signum() { 0.0 } else { next };
                }
                moved = true;
                live.retain(|&k| cur[active[k]] != 0.0);
                basis = restrict_basis(basis, &active, &cur);
            }
            continue;
        };
        let rhs = DVector::from_iterator(
            active.len(),
            pos.iter()
                .zip(&active)
                .map(|(&k, &j)| xty[k] - 0.5 * lambda * weights[j] * cur[j].signum()),
        );
        let sol = chol.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut step = 1.0;
        for (k, &j) in active.iter().enumerate() {
            if sol[k] == 0.0 || sol[k].signum() != cur[j].signum() {
                step = f64::min(step, cur[j] / (cur[j] - sol[k]));
            }
        }
        moved = true;
        if step >= 1.0 {
            for (k, &j) in active.iter().enumerate() {
                cur[j] = sol[k];
            }
            break;
        }
        for (k, &j) in active.iter().enumerate() {
            let next = cur[j] + step * (sol[k] - cur[j]);
            let crosses = sol[k] == 0.0 || sol[k].signum() != cur[j].signum();
            let t = cur[j] / (cur[j] - sol[k]);
            cur[j] = if crosses && t <= step * (1.0 + 1e-12) || next.signum() != cur[j].signum() {
                0.0
            } else {
                next
            };
        }
    }
    if !moved {
        return Ok(None);
    }
    let residual = system.residual(&cur)?;
    Ok(Some((cur, residual)))
}

/// Orthonormal basis of the numerical null space of `A`, one column per direction.
fn null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = a.shape();
    let square = if n < m {
        let mut padded = DMatrix::zeros(m, m);
        padded.rows_mut(0, n).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = square.svd(false, true);
    let Some(v_t) = svd.v_t else {
        return DMatrix::zeros(m, 0);
    };
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .collect();
    DMatrix::from_fn(m, rows.len(), |k, c| v_t[(rows[c], k)])
}

/// Keeps the part of a null-space basis that vanishes on the coordinates of
/// `active` that are now zero in `cur`.
fn restrict_basis(mut basis: DMatrix<f64>, active: &[usize], cur: &[f64]) -> DMatrix<f64> {
    for (k, &j) in active.iter().enumerate() {
        if cur[j] != 0.0 || basis.ncols() == 0 {
            continue;
        }
        let row = basis.row(k).clone_owned();
        let (pivot, &big) = row
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty basis");
        if big.abs() <= 1e-12 {
            continue;
        }
        let pcol = basis.column(pivot).clone_owned();
        for c in 0..basis.ncols() {
            if c != pivot {
                let f = row[c] / big;
                basis.column_mut(c).axpy(-f, &pcol, 1.0);
            }
        }
        basis = basis.remove_column(pivot);
        for mut col in basis.column_iter_mut() {
            let len = col.norm();
            if len > 0.0 {
                col /= len;
            }
        }
    }
    basis
}

fn path_on(
    system: &StackedSystem,
    grid: &[f64],
    config: &LassoPathConfig,
) -> Result<Vec<PathPoint>> {
    let weights = penalty_weights(system, config.standardize);
    let mut warm = vec![0.0; system.n_cols()];
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let report = coordinate_descent_with(system, lambda, &warm, &weights, config)
            .map_err(|e| e.tagged(format!("lambda = {lambda:.6e}")))?;
        warm.clone_from(&report.estimate.phi);
        out.push(PathPoint {
            lambda,
            estimate: report.estimate,
        });
    }
    Ok(out)
}

/// Warm-started solutions along the default log-spaced λ grid.
pub fn lasso_path(system: &StackedSystem, config: &LassoPathConfig) -> Result<Vec<PathPoint>> {
    config.validate()?;
    let weights = penalty_weights(system, config.standardize);
    let lmax = lambda_max(system, &weights)?;
    if lmax <= 0.0 {
        return Err(Error::InvalidArgument(
            "response is uncorrelated with every column; the lasso path is degenerate".into(),
        ));
    }
    path_on(system, &lambda_grid(lmax, config), config)
}

/// Stratified fold assignment: each block's rows are shuffled with the seed and
/// cut into `folds` contiguous chunks. Returns `folds[f][b]` = held-out rows.
pub fn cv_folds(system: &StackedSystem, folds: usize, seed: u64) -> Result<Vec<Vec<Vec<usize>>>> {
    let z = system.z();
    let mut out = vec![vec![Vec::new(); z]; folds];
    for b in 0..z {
        let (start, end) = system.block_rows(b);
        let n = end - start;
        if n < folds {
            return Err(Error::CrossValidation(format!(
                "group block {b} has {n} rows, fewer than {folds} folds; use fewer folds"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        for (f, fold) in out.iter_mut().enumerate() {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let mut held: Vec<usize> = rows[lo..hi].to_vec();
            held.sort_unstable();
            fold[b] = held;
        }
    }
    Ok(out)
}

fn complement(held: &[usize], n: usize) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// K-fold cross-validated λ (minimum mean held-out error), refit on all rows.
pub fn select_lambda_cv(
    system: &StackedSystem,
    config: &LassoPathConfig,
    seed: u64,
) -> Result<CvSelection> {
    config.validate()?;
    if system.n_total() < config.cv_folds {
        return Err(Error::CrossValidation(format!(
            "{} rows cannot be split into {} folds",
            system.n_total(),
            config.cv_folds
        )));
    }
    let weights = penalty_weights(system, config.standardize);
    let lmax = lambda_max(system, &weights)?;
    if lmax <= 0.0 {
        return Err(Error::InvalidArgument(
            "response is uncorrelated with every column; the lasso path is degenerate".into(),
        ));
    }
    let grid = lambda_grid(lmax, config);
    let folds = cv_folds(system, config.cv_folds, seed)?;

    let fold_errors: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| -> Result<Vec<f64>> {
            let train_rows: Vec<Vec<usize>> = held
                .iter()
                .enumerate()
                .map(|(b, h)| {
                    let (s, e) = system.block_rows(b);
                    complement(h, e - s)
                })
                .collect();
            let train = system.select_rows(&train_rows)?;
            let test = system.select_rows(held)?;
            let path = path_on(&train, &grid, config).map_err(|e| e.tagged(format!("fold {f}")))?;
            path.iter()
                .map(|pt| test.rss(&pt.estimate.phi))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = system.n_total() as f64;
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| (lambda, fold_errors.iter().map(|e| e[k]).sum::<f64>() / n))
        .collect();
    let best = curve
        .iter()
        .enumerate()
        .fold(0, |best, (k, &(_, err))| if err < curve[best].1 { k } else { best });

    let refit = path_on(system, &grid[..=best], config)?;
    let estimate = refit
        .into_iter()
        .last()
        .map(|pt| pt.estimate)
        .expect("grid prefix is non-empty");
    Ok(CvSelection {
        lambda_opt: grid[best],
        estimate,
        cv_curve: curve,
    })
}
