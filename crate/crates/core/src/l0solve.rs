//! Fixed-size best-subset regression on the stacked system.
//!
//! [`fit_support_size`] finds a support of size γ by splicing: starting from
//! the γ columns most correlated with the response, it repeatedly exchanges the
//! active columns whose removal costs least with the inactive columns whose
//! addition gains most. Once no block exchange helps, every single
//! active/inactive swap is scored exactly through rank-one updates of the
//! restricted Gram inverse, so the returned support is swap-stable.
//!
//! [`exhaustive_best_subset`] enumerates every support and is the reference
//! the splicing solver is checked against.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datamodel::CoefficientEstimate;
use crate::error::{Error, Result};
use crate::stacking::StackedSystem;

/// Relative singular-value threshold for restricted least squares.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Largest number of supports the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Options {
    /// Largest number of columns exchanged in one splicing step.
    pub max_splicing_size: usize,
    pub max_iterations: usize,
    /// Relative RSS improvement an exchange must achieve to be accepted.
    pub tolerance: f64,
}

impl Default for L0Options {
    fn default() -> Self {
        L0Options {
            max_splicing_size: 2,
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

impl L0Options {
    pub fn validate(&self) -> Result<()> {
        if self.max_splicing_size == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "splicing size and iteration limit must be positive".into(),
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {} must lie in (0, 1)",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Least-squares coefficients restricted to a support.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedFit {
    /// One coefficient per support index, in support order.
    pub coef: Vec<f64>,
    pub rss: f64,
    pub rank_deficient: bool,
}

/// Restricted least squares with everything the splicing steps need.
struct ActiveFit {
    support: Vec<usize>,
    coef: DVector<f64>,
    residual: DVector<f64>,
    rss: f64,
    /// `(𝕏_Sᵀ 𝕏_S)⁻¹`, only when the restricted design has full column rank.
    gram_inv: Option<DMatrix<f64>>,
}

impl ActiveFit {
    fn rank_deficient(&self) -> bool {
        self.gram_inv.is_none() && !self.support.is_empty()
    }

    fn into_estimate(self, system: &StackedSystem) -> Result<CoefficientEstimate> {
        let mut phi = vec![0.0; system.n_cols()];
        for (k, &j) in self.support.iter().enumerate() {
            phi[j] = self.coef[k];
        }
        let rank_deficient = self.rank_deficient();
        system.estimate(phi, rank_deficient)
    }
}

fn fit_active(system: &StackedSystem, support: Vec<usize>) -> Result<ActiveFit> {
    let y = system.y();
    if support.is_empty() {
        return Ok(ActiveFit {
            support,
            coef: DVector::zeros(0),
            residual: y.clone(),
            rss: y.norm_squared(),
            gram_inv: None,
        });
    }
    if support.len() > system.n_total() {
        return Err(Error::InvalidArgument(format!(
            "support of size {} exceeds the {} stacked rows",
            support.len(),
            system.n_total()
        )));
    }
    let a = system.submatrix(&support);
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let threshold = RANK_THRESHOLD * sigma_max;
    let full_rank = sigma_max > 0.0 && svd.singular_values.iter().all(|&s| s > threshold);

    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let uty = u.tr_mul(y);
    let k = support.len();
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            scaled[i] = uty[i] / s;
        }
    }
    let coef = v_t.tr_mul(&scaled);

    let gram_inv = full_rank.then(|| {
        let mut inv = DMatrix::zeros(k, k);
        for (i, &s) in svd.singular_values.iter().enumerate() {
            let vi = v_t.row(i).transpose();
            inv += (&vi * vi.transpose()) / (s * s);
        }
        inv
    });

    let residual = y - &a * &coef;
    let rss = residual.norm_squared();
    Ok(ActiveFit {
        support,
        coef,
        residual,
        rss,
        gram_inv,
    })
}

/// Coefficients minimizing the residual over the given columns; minimum-norm
/// when the restricted design is singular. An empty support gives the null fit.
pub fn least_squares_on_support(system: &StackedSystem, support: &[usize]) -> Result<RestrictedFit> {
    if let Some(&bad) = support.iter().find(|&&j| j >= system.n_cols()) {
        return Err(Error::InvalidArgument(format!(
            "column {bad} out of range for {} columns",
            system.n_cols()
        )));
    }
    let fit = fit_active(system, support.to_vec())?;
    Ok(RestrictedFit {
        rank_deficient: fit.rank_deficient(),
        coef: fit.coef.iter().copied().collect(),
        rss: fit.rss,
    })
}

fn check_gamma(system: &StackedSystem, gamma: usize) -> Result<()> {
    let max = system.n_cols().min(system.n_total());
    if gamma == 0 || gamma > max {
        return Err(Error::GammaOutOfRange { gamma, max });
    }
    Ok(())
}

/// Orders indices by descending score, breaking ties toward the smaller index.
fn rank_descending(indices: &mut [usize], score: impl Fn(usize) -> f64) {
    indices.sort_by(|&a, &b| {
        score(b)
            .partial_cmp(&score(a))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
}

/// The γ columns with the largest `|𝕏ⱼᵀ𝕐| / ‖𝕏ⱼ‖`.
pub fn screening_support(system: &StackedSystem, gamma: usize) -> Result<Vec<usize>> {
    check_gamma(system, gamma)?;
    let xty = system.apply_transpose(system.y().as_slice())?;
    let norms = system.column_norms_sq();
    let score = |j: usize| {
        if norms[j] > 0.0 {
            xty[j].abs() / norms[j].sqrt()
        } else {
            -1.0
        }
    };
    let mut idx: Vec<usize> = (0..system.n_cols()).collect();
    rank_descending(&mut idx, score);
    idx.truncate(gamma);
    idx.sort_unstable();
    Ok(idx)
}

/// Greedy forward selection: each step adds the column with the largest exact
/// RSS decrease given the columns already chosen. Columns in the span of the
/// chosen set are skipped; if fewer than γ remain, the best-screened unused
/// columns fill the support.
pub fn forward_support(system: &StackedSystem, gamma: usize) -> Result<Vec<usize>> {
    check_gamma(system, gamma)?;
    let n_cols = system.n_cols();
    let norms = system.column_norms_sq();
    let mut projected = vec![0.0; n_cols];
    let mut chosen = vec![false; n_cols];
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(gamma);
    let mut r = system.y().clone();
    let mut support = Vec::with_capacity(gamma);
    for _ in 0..gamma {
        let xr = system.apply_transpose(r.as_slice())?;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n_cols {
            let left = norms[j] - projected[j];
            if chosen[j] || left <= 1e-10 * norms[j] || norms[j] == 0.0 {
                continue;
            }
            let g = xr[j] * xr[j] / left;
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((j, g));
            }
        }
        let Some((j, _)) = best else {
            break;
        };
        let mut q = system.column(j);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&q);
                q.axpy(-c, b, 1.0);
            }
        }
        let len = q.norm();
        if len == 0.0 {
            break;
        }
        q /= len;
        let c = q.dot(&r);
        r.axpy(-c, &q, 1.0);
        let xq = system.apply_transpose(q.as_slice())?;
        for (pj, v) in projected.iter_mut().zip(xq.iter()) {
            *pj += v * v;
        }
        basis.push(q);
        chosen[j] = true;
        support.push(j);
    }
    if support.len() < gamma {
        for j in screening_support(system, n_cols.min(system.n_total()).max(gamma))? {
            if support.len() == gamma {
                break;
            }
            if !chosen[j] {
                chosen[j] = true;
                support.push(j);
            }
        }
    }
    support.sort_unstable();
    Ok(support)
}

/// Best support of size γ found by splicing from two starts, the
/// correlation-screened columns and the forward-selection path; the lower
/// RSS wins, the screened start on ties.
pub fn fit_support_size(
    system: &StackedSystem,
    gamma: usize,
    opts: &L0Options,
) -> Result<CoefficientEstimate> {
    let screened = splice(system, screening_support(system, gamma)?, opts)?;
    let forward = splice(system, forward_support(system, gamma)?, opts)?;
    let best = if improves(forward.rss, screened.rss, opts) {
        forward
    } else {
        screened
    };
    best.into_estimate(system)
}

/// Splicing from a caller-supplied starting support of size γ.
pub fn fit_support_size_from(
    system: &StackedSystem,
    init: &[usize],
    opts: &L0Options,
) -> Result<CoefficientEstimate> {
    check_gamma(system, init.len())?;
    let mut start = init.to_vec();
    start.sort_unstable();
    start.dedup();
    if start.len() != init.len() || start.iter().any(|&j| j >= system.n_cols()) {
        return Err(Error::InvalidArgument(
            "initial support must hold distinct in-range columns".into(),
        ));
    }
    splice(system, start, opts)?.into_estimate(system)
}

fn splice(system: &StackedSystem, init: Vec<usize>, opts: &L0Options) -> Result<ActiveFit> {
    opts.validate()?;
    let mut fit = fit_active(system, init)?;
    for _ in 0..opts.max_iterations {
        if fit.rss <= 0.0 {
            break;
        }
        if let Some(next) = splice_step(system, &fit, opts)? {
            fit = next;
            continue;
        }
        if let Some(next) = best_single_swap(system, &fit, opts)? {
            fit = next;
            continue;
        }
        if let Some(next) = best_pair_swap(system, &fit, opts)? {
            fit = next;
            continue;
        }
        break;
    }
    Ok(fit)
}

fn improves(candidate: f64, current: f64, opts: &L0Options) -> bool {
    current - candidate > opts.tolerance * current
}

fn inactive_of(n_cols: usize, support: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; n_cols];
    for &j in support {
        mask[j] = true;
    }
    (0..n_cols).filter(|&j| !mask[j]).collect()
}

/// One splicing pass: swap the k cheapest active columns for the k most
/// promising inactive ones, k = 1..=max_splicing_size, first improvement wins.
fn splice_step(
    system: &StackedSystem,
    fit: &ActiveFit,
    opts: &L0Options,
) -> Result<Option<ActiveFit>> {
    let norms = system.column_norms_sq();
    let xr = system.apply_transpose(fit.residual.as_slice())?;
    let gamma = fit.support.len();

    let mut inactive = inactive_of(system.n_cols(), &fit.support);
    let gain = |j: usize| {
        if norms[j] > 0.0 {
            xr[j] * xr[j] / norms[j]
        } else {
            0.0
        }
    };
    rank_descending(&mut inactive, gain);

    // Positions within the support, cheapest-to-drop first.
    let sacrifice: Vec<f64> = (0..gamma)
        .map(|k| {
            let c = fit.coef[k];
            match &fit.gram_inv {
                Some(inv) if inv[(k, k)] > 0.0 => c * c / inv[(k, k)],
                _ => c * c * norms[fit.support[k]],
            }
        })
        .collect();
    let mut positions: Vec<usize> = (0..gamma).collect();
    positions.sort_by(|&a, &b| {
        sacrifice[a]
            .partial_cmp(&sacrifice[b])
            .unwrap_or(Ordering::Equal)
            .then(fit.support[a].cmp(&fit.support[b]))
    });

    let max_k = opts.max_splicing_size.min(gamma).min(inactive.len());
    for k in 1..=max_k {
        let mut dropped = vec![false; gamma];
        for &pos in &positions[..k] {
            dropped[pos] = true;
        }
        let mut next: Vec<usize> = fit
            .support
            .iter()
            .enumerate()
            .filter(|(pos, _)| !dropped[*pos])
            .map(|(_, &j)| j)
            .chain(inactive[..k].iter().copied())
            .collect();
        next.sort_unstable();
        let candidate = fit_active(system, next)?;
        if improves(candidate.rss, fit.rss, opts) {
            return Ok(Some(candidate));
        }
    }
    Ok(None)
}

/// Scores every (active, inactive) swap exactly and applies the best one if it
/// improves the residual.
///
/// With `q` the unit vector spanning the part of span(S) orthogonal to
/// span(S \ {a}), dropping `a` raises the RSS by `(qᵀ𝕐)²` and adding `j`
/// afterwards lowers it by `(𝕏ⱼᵀ r₋ₐ)² / ‖P⊥₋ₐ 𝕏ⱼ‖²`, where both terms follow
/// from `𝕏ⱼᵀr`, `𝕏ⱼᵀ𝕏_S` and the Gram inverse.
fn best_single_swap(
    system: &StackedSystem,
    fit: &ActiveFit,
    opts: &L0Options,
) -> Result<Option<ActiveFit>> {
    let Some(inv) = &fit.gram_inv else {
        return Ok(None);
    };
    let gamma = fit.support.len();
    let n_cols = system.n_cols();
    let inactive = inactive_of(n_cols, &fit.support);
    if inactive.is_empty() {
        return Ok(None);
    }
    let norms = system.column_norms_sq();
    let xr = system.apply_transpose(fit.residual.as_slice())?;

    // cross[j, k] = 𝕏ⱼᵀ 𝕏_{S_k}
    let mut cross = DMatrix::zeros(n_cols, gamma);
    for (k, &s) in fit.support.iter().enumerate() {
        let col = system.column(s);
        cross.set_column(k, &system.apply_transpose(col.as_slice())?);
    }
    let m = &cross * inv;

    let diag: Vec<f64> = (0..gamma).map(|k| inv[(k, k)]).collect();
    let qy: Vec<f64> = (0..gamma).map(|k| fit.coef[k] / diag[k].sqrt()).collect();

    let mut best: Option<(f64, usize, usize)> = None;
    for &j in &inactive {
        if norms[j] <= 0.0 {
            continue;
        }
        let mj = m.row(j);
        let explained = mj.dot(&cross.row(j));
        let resid_norm = norms[j] - explained;
        for k in 0..gamma {
            let qx = mj[k] / diag[k].sqrt();
            let denom = resid_norm + qx * qx;
            if denom <= 1e-12 * norms[j] {
                continue;
            }
            let num = xr[j] + qy[k] * qx;
            let rss = fit.rss + qy[k] * qy[k] - num * num / denom;
            let better = match best {
                None => true,
                Some((b, bk, bj)) => {
                    rss < b || (rss == b && (fit.support[k], j) < (fit.support[bk], bj))
                }
            };
            if better {
                best = Some((rss, k, j));
            }
        }
    }

    let Some((predicted, k, j)) = best else {
        return Ok(None);
    };
    if !improves(predicted, fit.rss, opts) {
        return Ok(None);
    }
    let mut next = fit.support.clone();
    next[k] = j;
    next.sort_unstable();
    let candidate = fit_active(system, next)?;
    Ok(improves(candidate.rss, fit.rss, opts).then_some(candidate))
}

/// Scores every exchange of two active columns for two inactive ones within
/// a candidate pool and applies the best if it improves the residual. The pool
/// holds the cheapest-to-drop active and highest-gain inactive columns, and
/// covers everything on small systems.
fn best_pair_swap(
    system: &StackedSystem,
    fit: &ActiveFit,
    opts: &L0Options,
) -> Result<Option<ActiveFit>> {
    const ACTIVE_POOL: usize = 6;
    const INACTIVE_POOL: usize = 12;
    let gamma = fit.support.len();
    let n_cols = system.n_cols();
    if gamma < 2 || n_cols < gamma + 2 {
        return Ok(None);
    }
    let norms = system.column_norms_sq();
    let xr = system.apply_transpose(fit.residual.as_slice())?;
    let mut inactive = inactive_of(n_cols, &fit.support);
    rank_descending(&mut inactive, |j| {
        if norms[j] > 0.0 {
            xr[j] * xr[j] / norms[j]
        } else {
            0.0
        }
    });
    inactive.truncate(INACTIVE_POOL);
    let mut positions: Vec<usize> = (0..gamma).collect();
    rank_descending(&mut positions, |k| {
        let c = fit.coef[k];
        let s = match &fit.gram_inv {
            Some(inv) if inv[(k, k)] > 0.0 => c * c / inv[(k, k)],
            _ => c * c * norms[fit.support[k]],
        };
        -s
    });
    positions.truncate(ACTIVE_POOL);
    positions.sort_unstable();

    let y = system.y();
    let candidates: Vec<DVector<f64>> = inactive.iter().map(|&j| system.column(j)).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (a, &k1) in positions.iter().enumerate() {
        for &k2 in &positions[a + 1..] {
            let kept: Vec<usize> = (0..gamma)
                .filter(|&k| k != k1 && k != k2)
                .map(|k| fit.support[k])
                .collect();
            let q = (!kept.is_empty()).then(|| system.submatrix(&kept).qr().q());
            let project = |v: &DVector<f64>| match &q {
                Some(q) => v - q * q.tr_mul(v),
                None => v.clone(),
            };
            let r = project(y);
            let base = r.norm_squared();
            let perp: Vec<DVector<f64>> = candidates.iter().map(&project).collect();
            let pr: Vec<f64> = perp.iter().map(|v| v.dot(&r)).collect();
            let pn: Vec<f64> = perp.iter().map(|v| v.norm_squared()).collect();
            for b in 0..inactive.len() {
                for c in b + 1..inactive.len() {
                    let cross = perp[b].dot(&perp[c]);
                    let det = pn[b] * pn[c] - cross * cross;
                    if det <= 1e-10 * pn[b] * pn[c] {
                        continue;
                    }
                    let explained =
                        (pn[c] * pr[b] * pr[b] - 2.0 * cross * pr[b] * pr[c] + pn[b] * pr[c] * pr[c])
                            / det;
                    let rss = base - explained;
                    if best.as_ref().is_none_or(|(cur, _)| rss < *cur) {
                        let mut next = kept.clone();
                        next.extend([inactive[b], inactive[c]]);
                        next.sort_unstable();
                        best = Some((rss, next));
                    }
                }
            }
        }
    }
    let Some((predicted, next)) = best else {
        return Ok(None);
    };
    if !improves(predicted, fit.rss, opts) {
        return Ok(None);
    }
    let candidate = fit_active(system, next)?;
    Ok(improves(candidate.rss, fit.rss, opts).then_some(candidate))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

/// Advances `comb` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for t in i + 1..k {
                comb[t] = comb[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Globally RSS-minimal support of size γ by enumeration; ties go to the
/// lexicographically smallest support.
pub fn exhaustive_best_subset(system: &StackedSystem, gamma: usize) -> Result<CoefficientEstimate> {
    check_gamma(system, gamma)?;
    let n = system.n_cols();
    let count = binomial(n, gamma);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchTooLarge {
            count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let tie = 1e-12 * system.y().norm_squared();
    let mut comb: Vec<usize> = (0..gamma).collect();
    let mut best = fit_active(system, comb.clone())?;
    while next_combination(&mut comb, n) {
        let candidate = fit_active(system, comb.clone())?;
        if candidate.rss < best.rss - tie {
            best = candidate;
        }
    }
    best.into_estimate(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{GroupData, MultiSourceProblem};
    use crate::stacking::build_stacked;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn target_only(design: DMatrix<f64>, y: DVector<f64>) -> StackedSystem {
        // n = 1 keeps the scaling at identity
        let n = design.nrows();
        let g = GroupData::new(design * (n as f64).sqrt(), y * (n as f64).sqrt()).unwrap();
        build_stacked(&MultiSourceProblem::new(vec![g], 0).unwrap()).unwrap()
    }

    fn random_system(rng: &mut ChaCha8Rng, n: usize, p: usize) -> StackedSystem {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        target_only(x, y)
    }

    /// Columns of a random orthogonal matrix via QR.
    fn orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
        m.qr().q()
    }

    #[test]
    fn forward_selection_matches_greedy_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let system = random_system(&mut rng, 25, 9);
        let support = forward_support(&system, 4).unwrap();
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..4 {
            let next = (0..9)
                .filter(|j| !chosen.contains(j))
                .min_by(|&a, &b| {
                    let rss = |j: usize| {
                        let mut s = chosen.clone();
                        s.push(j);
                        s.sort_unstable();
                        fit_active(&system, s).unwrap().rss
                    };
                    rss(a).total_cmp(&rss(b))
                })
                .unwrap();
            chosen.push(next);
        }
        chosen.sort_unstable();
        assert_eq!(support, chosen);
    }

    #[test]
    fn no_pair_exchange_improves_a_small_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let system = random_system(&mut rng, 15, 8);
            let opts = L0Options::default();
            let est = fit_support_size(&system, 3, &opts).unwrap();
            let fit = fit_active(&system, est.support.clone()).unwrap();
            let inactive = inactive_of(8, &fit.support);
            for a in 0..3 {
                for b in a + 1..3 {
                    for (i, &u) in inactive.iter().enumerate() {
                        for &v in &inactive[i + 1..] {
                            let mut s = fit.support.clone();
                            s[a] = u;
                            s[b] = v;
                            s.sort_unstable();
                            let alt = fit_active(&system, s).unwrap();
                            assert!(!improves(alt.rss, fit.rss, &opts));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn options_validation() {
        assert!(L0Options::default().validate().is_ok());
        let bad = L0Options {
            tolerance: 0.0,
            ..L0Options::default()
        };
        assert!(bad.validate().is_err());
        let bad = L0Options {
            max_splicing_size: 0,
            ..L0Options::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_support_is_null_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 6, 3);
        let fit = least_squares_on_support(&sys, &[]).unwrap();
        assert!(fit.coef.is_empty());
        assert_eq!(fit.rss, sys.y().norm_squared());
    }

    #[test]
    fn single_unit_column_coefficient_is_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = orthonormal(&mut rng, 10, 3);
        let y = DVector::from_fn(10, |i, _| i as f64 * 0.1 - 0.3);
        let sys = target_only(q.clone(), y.clone());
        let fit = least_squares_on_support(&sys, &[1]).unwrap();
        let expected = q.column(1).dot(&y);
        assert!((fit.coef[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn square_support_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 5, 8);
        let fit = least_squares_on_support(&sys, &[0, 2, 3, 5, 7]).unwrap();
        assert!(fit.rss < 1e-20);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn duplicated_column_falls_back_to_minimum_norm() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 1.0]);
        let sys = target_only(x, y);
        let fit = least_squares_on_support(&sys, &[0, 1]).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.coef[0] - fit.coef[1]).abs() < 1e-12);
        assert!((fit.coef[0] - 0.5).abs() < 1e-12);
        assert!((fit.rss - 1.0).abs() < 1e-12);
        let est = fit_support_size(&sys, 2, &L0Options::default()).unwrap();
        assert!(est.rank_deficient);
    }

    #[test]
    fn out_of_range_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_system(&mut rng, 4, 6);
        assert!(least_squares_on_support(&sys, &[6]).is_err());
        assert!(fit_support_size(&sys, 0, &L0Options::default()).is_err());
        assert!(fit_support_size(&sys, 5, &L0Options::default()).is_err());
        assert!(exhaustive_best_subset(&sys, 5).is_err());
        assert!(fit_support_size_from(&sys, &[1, 1], &L0Options::default()).is_err());
    }

    #[test]
    fn orthonormal_design_picks_largest_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = orthonormal(&mut rng, 20, 6);
        let y = DVector::from_fn(20, |_, _| rng.random::<f64>() - 0.5);
        let sys = target_only(q.clone(), y.clone());
        let xty = q.tr_mul(&y);
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| xty[b].abs().partial_cmp(&xty[a].abs()).unwrap());
        let mut expected = idx[..2].to_vec();
        expected.sort_unstable();

        let est = fit_support_size(&sys, 2, &L0Options::default()).unwrap();
        assert_eq!(est.support, expected);
        let oracle = exhaustive_best_subset(&sys, 2).unwrap();
        assert_eq!(oracle.support, expected);
    }

    #[test]
    fn exact_sparse_signal_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(30, 15, |_, _| rng.random::<f64>() - 0.5);
        let mut truth = DVector::zeros(15);
        truth[2] = 1.5;
        truth[7] = -2.0;
        truth[11] = 0.75;
        let sys = target_only(x.clone(), &x * &truth);
        let est = fit_support_size(&sys, 3, &L0Options::default()).unwrap();
        assert_eq!(est.support, vec![2, 7, 11]);
        assert!(est.rss <= 1e-18);
        for j in [2, 7, 11] {
            assert!((est.phi[j] - truth[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn exhaustive_full_support_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(12, 4, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(12, |_, _| rng.random::<f64>() - 0.5);
        let sys = target_only(x.clone(), y.clone());
        let est = exhaustive_best_subset(&sys, 4).unwrap();
        let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
        for j in 0..4 {
            assert!((est.phi[j] - ols[j]).abs() < 1e-10);
        }
        let resid = (&y - &x * &ols).norm_squared();
        assert!((est.rss - resid).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_single_column_is_argmax_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = orthonormal(&mut rng, 15, 5);
        // non-orthogonal but unit-norm columns
        let mixed = DMatrix::from_fn(15, 5, |i, j| q[(i, j)] + 0.3 * q[(i, (j + 1) % 5)]);
        let mut unit = mixed.clone();
        for mut c in unit.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let y = DVector::from_fn(15, |_, _| rng.random::<f64>() - 0.5);
        let sys = target_only(unit.clone(), y.clone());
        let xty = unit.tr_mul(&y);
        let best = (0..5)
            .max_by(|&a, &b| xty[a].abs().partial_cmp(&xty[b].abs()).unwrap())
            .unwrap();
        let est = exhaustive_best_subset(&sys, 1).unwrap();
        assert_eq!(est.support, vec![best]);
        assert!((est.rss - (y.norm_squared() - xty[best] * xty[best])).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_response_gives_null_coefficients() {
        let x = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0.]);
        let y = DVector::from_column_slice(&[0., 0., 0., 2.]);
        let sys = target_only(x, y);
        let est = exhaustive_best_subset(&sys, 2).unwrap();
        assert!(est.phi.iter().all(|&v| v == 0.0));
        assert_eq!(est.gamma, 0);
        assert_eq!(est.rss, 4.0);
    }

    #[test]
    fn exhaustive_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random_system(&mut rng, 30, 60);
        assert!(matches!(
            exhaustive_best_subset(&sys, 10),
            Err(Error::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(1200, 1), 1200);
    }

    #[test]
    fn swap_scores_match_direct_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sys = random_system(&mut rng, 25, 9);
        let fit = fit_active(&sys, vec![1, 4, 6]).unwrap();
        let inv = fit.gram_inv.clone().unwrap();
        let xr = sys.apply_transpose(fit.residual.as_slice()).unwrap();
        let norms = sys.column_norms_sq();
        for (k, _) in fit.support.iter().enumerate() {
            for j in inactive_of(9, &fit.support) {
                let mut cross = DVector::zeros(3);
                for (t, &s) in fit.support.iter().enumerate() {
                    cross[t] = sys.column(j).dot(&sys.column(s));
                }
                let mj = inv.tr_mul(&cross);
                let d = inv[(k, k)].sqrt();
                let qx = mj[k] / d;
                let qy = fit.coef[k] / d;
                let denom = norms[j] - mj.dot(&cross) + qx * qx;
                let num = xr[j] + qy * qx;
                let predicted = fit.rss + qy * qy - num * num / denom;
                let mut swapped = fit.support.clone();
                swapped[k] = j;
                let direct = least_squares_on_support(&sys, &swapped).unwrap().rss;
                assert!((predicted - direct).abs() < 1e-10 * (1.0 + direct));
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = random_system(&mut rng, 40, 12);
        let a = fit_support_size(&sys, 4, &L0Options::default()).unwrap();
        let b = fit_support_size(&sys, 4, &L0Options::default()).unwrap();
        assert_eq!(a, b);
    }
}
