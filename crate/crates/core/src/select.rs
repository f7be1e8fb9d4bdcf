//! Support-size selection by HBIC and the two end-to-end estimators.
//!
//! `HBIC(γ) = log(RSS/N) + log(log N)·log(pZ)/N · γ`, natural logarithms.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datamodel::{CoefficientEstimate, FitResult, HbicPoint};
use crate::error::{Error, Result};
use crate::l0solve::{self, L0Options};
use crate::l1solve::{self, LassoPathConfig};
use crate::stacking::StackedSystem;

/// RSS values below this fraction of `‖𝕐‖²` are floored before taking logs.
pub const RSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbicValue {
    pub gamma: usize,
    pub q_term: f64,
    pub penalty: f64,
    pub total: f64,
}

/// HBIC from raw quantities. `rss` is used as given.
pub fn hbic_from_parts(n: usize, n_cols: usize, gamma: usize, rss: f64) -> Result<HbicValue> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "HBIC needs at least 3 rows, got {n}"
        )));
    }
    if !(rss > 0.0) {
        return Err(Error::PerfectFit);
    }
    let nf = n as f64;
    let q_term = (rss / nf).ln();
    let penalty = nf.ln().ln() * (n_cols as f64).ln() / nf * gamma as f64;
    Ok(HbicValue {
        gamma,
        q_term,
        penalty,
        total: q_term + penalty,
    })
}

/// HBIC of an estimate on its stacked system. Residuals that underflow
/// `RSS_FLOOR·‖𝕐‖²` are floored so exact fits stay comparable.
pub fn hbic(system: &StackedSystem, estimate: &CoefficientEstimate) -> Result<HbicValue> {
    let floor = RSS_FLOOR * system.y().norm_squared();
    hbic_from_parts(
        system.n_total(),
        system.n_cols(),
        estimate.gamma,
        estimate.rss.max(floor),
    )
}

/// `min(⌊N / (2·log(pZ))⌋, pZ, 100)`, kept within `[1, N − 1]`.
pub fn default_gamma_max(n: usize, n_cols: usize) -> usize {
    let by_ratio = if n_cols > 1 {
        (n as f64 / (2.0 * (n_cols as f64).ln())).floor() as usize
    } else {
        n
    };
    by_ratio
        .min(n_cols)
        .min(100)
        .min(n.saturating_sub(1))
        .max(1)
}

/// Index of the smallest value; the first one wins ties.
fn argmin_first(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub fn extract_target(estimate: &CoefficientEstimate, p: usize) -> Result<Vec<f64>> {
    if estimate.phi.len() < p {
        return Err(Error::DimensionMismatch {
            context: "coefficient vector shorter than p".into(),
            expected: p,
            found: estimate.phi.len(),
        });
    }
    Ok(estimate.phi[..p].to_vec())
}

/// Splicing fit for one γ, run from the starts of `fit_support_size` and from
/// the previous support grown by its best inactive column; the lower RSS wins.
fn fit_gamma(
    system: &StackedSystem,
    gamma: usize,
    previous: Option<&CoefficientEstimate>,
    opts: &L0Options,
) -> Result<CoefficientEstimate> {
    let cold = l0solve::fit_support_size(system, gamma, opts)?;
    let Some(prev) = previous else {
        return Ok(cold);
    };
    if prev.support.len() + 1 != gamma {
        return Ok(cold);
    }
    let r = system.residual(&prev.phi)?;
    let xr = system.apply_transpose(r.as_slice())?;
    let norms = system.column_norms_sq();
    let mut in_support = vec![false; system.n_cols()];
    for &j in &prev.support {
        in_support[j] = true;
    }
    let grow = (0..system.n_cols())
        .filter(|&j| !in_support[j] && norms[j] > 0.0)
        .map(|j| (j, xr[j] * xr[j] / norms[j]))
        .fold(None::<(usize, f64)>, |best, (j, g)| match best {
            Some((_, bg)) if bg >= g => best,
            _ => Some((j, g)),
        });
    let Some((j, _)) = grow else {
        return Ok(cold);
    };
    let mut init = prev.support.clone();
    init.push(j);
    let warm = l0solve::fit_support_size_from(system, &init, opts)?;
    Ok(if warm.rss < cold.rss { warm } else { cold })
}

/// Fits support sizes `1..=gamma_max`, scores each by HBIC and keeps the
/// minimizer (smallest γ on ties). `beta_target` is the first `p` coordinates.
pub fn fit_sotl(system: &StackedSystem, gamma_max: usize, opts: &L0Options) -> Result<FitResult> {
    let start = Instant::now();
    opts.validate()?;
    let max = system.n_cols().min(system.n_total().saturating_sub(1));
    if gamma_max == 0 || gamma_max > max {
        return Err(Error::GammaOutOfRange {
            gamma: gamma_max,
            max,
        });
    }

    let mut fits: Vec<(usize, CoefficientEstimate, HbicValue)> = Vec::with_capacity(gamma_max);
    let mut failed = Vec::new();
    let mut previous: Option<CoefficientEstimate> = None;
    for gamma in 1..=gamma_max {
        let outcome = fit_gamma(system, gamma, previous.as_ref(), opts)
            .and_then(|est| hbic(system, &est).map(|h| (est, h)));
        match outcome {
            Ok((est, h)) => {
                previous = Some(est.clone());
                fits.push((gamma, est, h));
            }
            Err(e) => {
                log::warn!("support size {gamma} failed: {e}");
                failed.push((gamma, e.to_string()));
                previous = None;
            }
        }
    }
    if fits.is_empty() {
        return Err(Error::SweepFailed(failed));
    }

    let best = argmin_first(fits.iter().map(|(_, _, h)| h.total)).expect("non-empty sweep");
    let hbic_trace = fits
        .iter()
        .map(|(gamma, _, h)| HbicPoint {
            gamma: *gamma,
            hbic: h.total,
        })
        .collect();
    let (gamma_opt, estimate, _) = fits.swap_remove(best);
    let beta_target = extract_target(&estimate, system.p())?;
    Ok(FitResult {
        method: "sotl".into(),
        estimate,
        beta_target,
        hbic_trace,
        gamma_opt,
        failed_gammas: failed,
        lambda: None,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Cross-validated lasso on the stacked system.
pub fn fit_sjets(system: &StackedSystem, config: &LassoPathConfig, seed: u64) -> Result<FitResult> {
    let start = Instant::now();
    let selection = l1solve::select_lambda_cv(system, config, seed)?;
    let beta_target = extract_target(&selection.estimate, system.p())?;
    Ok(FitResult {
        method: "sjets".into(),
        gamma_opt: selection.estimate.gamma,
        estimate: selection.estimate,
        beta_target,
        hbic_trace: Vec::new(),
        failed_gammas: Vec::new(),
        lambda: Some(selection.lambda_opt),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sotl,
    Sjets,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sotl => "sotl",
            Method::Sjets => "sjets",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sotl" => Ok(Method::Sotl),
            "sjets" | "s-jets" => Ok(Method::Sjets),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Settings for both estimators, so callers can fit either through one entry point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// `None` applies [`default_gamma_max`].
    pub gamma_max: Option<usize>,
    pub l0: L0Options,
    pub lasso: LassoPathConfig,
}

impl FitSettings {
    pub fn gamma_max_for(&self, system: &StackedSystem) -> usize {
        self.gamma_max
            .unwrap_or_else(|| default_gamma_max(system.n_total(), system.n_cols()))
    }
}

pub fn fit_method(
    system: &StackedSystem,
    method: Method,
    settings: &FitSettings,
    seed: u64,
) -> Result<FitResult> {
    match method {
        Method::Sotl => fit_sotl(system, settings.gamma_max_for(system), &settings.l0),
        Method::Sjets => fit_sjets(system, &settings.lasso, seed),
    }
}
