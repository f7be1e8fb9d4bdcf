//! Simulation scenarios, per-replication metrics and method comparison tables.
//!
//! Three data-generating processes are supported, all with AR(1)-correlated
//! Gaussian designs (`Σ_{ij} = 0.5^{|i−j|}`) and target coefficients equal to 2
//! on the first `s` features:
//!
//! 1. one auxiliary group of size `3·n_t` offset by `w` on the signal features;
//! 2. two auxiliary groups of size `n_t` offset by `0.5·w` and `w`;
//! 3. two auxiliary groups of size `n_t`, one offset by 0.5 on the signal
//!    features and one adversarial group offset by −4 on 40 random features.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{GroupData, MultiSourceProblem};
use crate::error::{Error, Result};
use crate::select::{fit_method, FitSettings, Method};
use crate::stacking::build_stacked;

/// Correlation of neighbouring features in every simulated design.
pub const DESIGN_RHO: f64 = 0.5;
/// Signal value on the first `s` target coefficients.
pub const SIGNAL: f64 = 2.0;
/// Size and value of the adversarial offset set in the third scenario.
pub const ADVERSARIAL_SIZE: usize = 40;
pub const ADVERSARIAL_VALUE: f64 = -4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub example_id: u8,
    pub p: usize,
    /// True sparsity of the target coefficients.
    pub s: usize,
    pub n_t: usize,
    pub sigma: f64,
    /// Offset magnitude; unused by the third scenario.
    pub w: f64,
    /// Number of groups, fixed by the scenario.
    pub z: usize,
    /// Replication count.
    pub r: usize,
    pub test_n: usize,
    pub base_seed: u64,
}

impl ScenarioConfig {
    pub fn new(example_id: u8, n_t: usize, sigma: f64, w: f64) -> Self {
        ScenarioConfig {
            example_id,
            p: 600,
            s: 10,
            n_t,
            sigma,
            w,
            z: groups_for(example_id),
            r: 50,
            test_n: 1000,
            base_seed: 20240601,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(1..=3).contains(&self.example_id) {
            return bad(format!("example must be 1, 2 or 3, got {}", self.example_id));
        }
        if self.z != groups_for(self.example_id) {
            return bad(format!(
                "example {} uses {} groups, config says {}",
                self.example_id,
                groups_for(self.example_id),
                self.z
            ));
        }
        if self.p == 0 || self.s > self.p {
            return bad(format!("need 0 < s <= p, got s = {}, p = {}", self.s, self.p));
        }
        if self.example_id == 3 && self.p < ADVERSARIAL_SIZE {
            return bad(format!("example 3 needs p >= {ADVERSARIAL_SIZE}"));
        }
        if self.n_t == 0 || self.r == 0 || self.test_n == 0 {
            return bad("n_t, r and test_n must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !self.w.is_finite() {
            return bad(format!("invalid sigma {} or w {}", self.sigma, self.w));
        }
        Ok(())
    }

    fn auxiliary_sizes(&self) -> Vec<usize> {
        match self.example_id {
            1 => vec![3 * self.n_t],
            _ => vec![self.n_t; 2],
        }
    }
}

pub fn groups_for(example_id: u8) -> usize {
    if example_id == 1 {
        2
    } else {
        3
    }
}

/// One generated replication.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: MultiSourceProblem,
    pub beta_true: Vec<f64>,
    /// Offsets of the auxiliary groups in group order.
    pub offsets: Vec<Vec<f64>>,
    pub test: GroupData,
}

/// Rows i.i.d. `N_p(0, Σ)` with `Σ_{ij} = ρ^{|i−j|}`, built by the AR(1)
/// recursion `x₁ = z₁`, `xⱼ = ρ·xⱼ₋₁ + √(1−ρ²)·zⱼ`.
pub fn gen_ar1_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(rho.abs() < 1.0, "AR(1) coefficient must satisfy |rho| < 1");
    let innov = (1.0 - rho * rho).sqrt();
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        data.push(prev);
        for _ in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            data.push(prev);
        }
    }
    DMatrix::from_row_slice(n, p, &data)
}

fn scenario_rng(base_seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replication as u64);
    rng
}

fn noisy_group<R: Rng + ?Sized>(
    n: usize,
    coef: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<GroupData> {
    let x = gen_ar1_design(n, coef.len(), DESIGN_RHO, rng);
    let mut y = &x * DVector::from_column_slice(coef);
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    GroupData::new(x, y)
}

/// Generates replication `replication` of a scenario. The target is group 0.
pub fn gen_scenario(config: &ScenarioConfig, replication: usize) -> Result<Scenario> {
    config.validate()?;
    let mut rng = scenario_rng(config.base_seed, replication);
    let (p, s) = (config.p, config.s);

    let mut beta = vec![0.0; p];
    beta[..s].fill(SIGNAL);
    let block = |v: f64| {
        let mut o = vec![0.0; p];
        o[..s].fill(v);
        o
    };
    let offsets = match config.example_id {
        1 => vec![block(config.w)],
        2 => vec![block(0.5 * config.w), block(config.w)],
        _ => {
            let mut adversarial = vec![0.0; p];
            for j in index::sample(&mut rng, p, ADVERSARIAL_SIZE) {
                adversarial[j] = ADVERSARIAL_VALUE;
            }
            vec![block(0.5), adversarial]
        }
    };

    let mut groups = Vec::with_capacity(config.z);
    groups.push(noisy_group(config.n_t, &beta, config.sigma, &mut rng)?);
    for (n, omega) in config.auxiliary_sizes().into_iter().zip(&offsets) {
        let coef: Vec<f64> = beta.iter().zip(omega).map(|(b, w)| b + w).collect();
        groups.push(noisy_group(n, &coef, config.sigma, &mut rng)?);
    }
    let test = noisy_group(config.test_n, &beta, config.sigma, &mut rng)?;
    Ok(Scenario {
        problem: MultiSourceProblem::new(groups, 0)?,
        beta_true: beta,
        offsets,
        test,
    })
}

/// Metrics of a single fitted replication, with the confusion counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    /// Mean squared prediction error on the held-out rows.
    pub se: f64,
    pub sra: f64,
    pub nz: usize,
    pub fpr: f64,
    pub tpr: f64,
    /// Fit wall time in seconds.
    pub rt: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Support recovery and prediction metrics; "nonzero" means exactly nonzero.
pub fn compute_metrics(
    beta_hat: &[f64],
    beta_true: &[f64],
    test: &GroupData,
    runtime_seconds: f64,
) -> Result<ReplicationRecord> {
    let p = beta_true.len();
    for (what, len) in [("estimate", beta_hat.len()), ("test design", test.p())] {
        if len != p {
            return Err(Error::DimensionMismatch {
                context: format!("{what} length"),
                expected: p,
                found: len,
            });
        }
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (est, truth) in beta_hat.iter().zip(beta_true) {
        match (*est != 0.0, *truth != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let pred = test.design() * DVector::from_column_slice(beta_hat);
    let se = (test.response() - pred).norm_squared() / test.n() as f64;
    Ok(ReplicationRecord {
        se,
        sra: (tp + tn) as f64 / p as f64,
        nz: tp + fp,
        fpr: ratio(fp, fp + tn),
        tpr: ratio(tp, tp + fn_),
        rt: runtime_seconds,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Replication averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub mse: f64,
    pub sra: f64,
    pub nz: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub art: f64,
}

impl SimMetrics {
    /// Averages in slice order, so equal inputs give bit-identical results.
    pub fn average(records: &[ReplicationRecord]) -> Option<SimMetrics> {
        if records.is_empty() {
            return None;
        }
        let k = records.len() as f64;
        let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
        Some(SimMetrics {
            mse: mean(&|r| r.se),
            sra: mean(&|r| r.sra),
            nz: mean(&|r| r.nz as f64),
            fpr: mean(&|r| r.fpr),
            tpr: mean(&|r| r.tpr),
            art: mean(&|r| r.rt),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// `None` when every replication failed.
    pub metrics: Option<SimMetrics>,
    pub replications: usize,
    pub failures: usize,
    pub errors: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: ScenarioConfig,
    pub summaries: Vec<MethodSummary>,
    /// `records[rep][method index]`; failed fits hold the error text.
    pub records: Vec<Vec<std::result::Result<ReplicationRecord, String>>>,
}

/// Seed of the method-internal randomness (CV folds) for one replication.
pub fn replication_seed(base_seed: u64, replication: usize) -> u64 {
    base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(replication as u64)
}

fn run_one(
    config: &ScenarioConfig,
    rep: usize,
    methods: &[Method],
    settings: &FitSettings,
) -> Result<Vec<std::result::Result<ReplicationRecord, String>>> {
    let scenario = gen_scenario(config, rep)?;
    let system = build_stacked(&scenario.problem)?;
    let seed = replication_seed(config.base_seed, rep);
    Ok(methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let fit = fit_method(&system, m, settings, seed).map_err(|e| e.to_string())?;
            let elapsed = start.elapsed().as_secs_f64();
            compute_metrics(&fit.beta_target, &scenario.beta_true, &scenario.test, elapsed)
                .map_err(|e| e.to_string())
        })
        .collect())
}

/// Runs `config.r` replications, fitting every method on identical data.
///
/// Replications run on the current rayon pool. A method failing on more than
/// 10% of replications aborts the run; rarer failures are excluded from the
/// averages and counted.
pub fn run_replications(
    config: &ScenarioConfig,
    methods: &[Method],
    settings: &FitSettings,
) -> Result<SimReport> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let records = (0..config.r)
        .into_par_iter()
        .map(|rep| run_one(config, rep, methods, settings))
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::with_capacity(methods.len());
    for (k, &method) in methods.iter().enumerate() {
        let mut ok = Vec::new();
        let mut errors = Vec::new();
        for (rep, row) in records.iter().enumerate() {
            match &row[k] {
                Ok(rec) => ok.push(*rec),
                Err(e) => errors.push((rep, e.clone())),
            }
        }
        if errors.len() * 10 > config.r {
            return Err(Error::TooManyFailures {
                method: method.to_string(),
                failed: errors.len(),
                total: config.r,
                first_error: errors[0].1.clone(),
            });
        }
        summaries.push(MethodSummary {
            method,
            metrics: SimMetrics::average(&ok),
            replications: ok.len(),
            failures: errors.len(),
            errors,
        });
    }
    Ok(SimReport {
        config: *config,
        summaries,
        records,
    })
}

/// One output line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub example: u8,
    pub sigma: f64,
    pub w: f64,
    pub n: usize,
    pub method: String,
    pub mse: f64,
    pub sra: f64,
    pub nz: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub art: f64,
    pub failures: usize,
}

impl SimReport {
    pub fn table_rows(&self) -> Vec<TableRow> {
        self.summaries
            .iter()
            .map(|s| {
                let m = s.metrics.unwrap_or(SimMetrics {
                    mse: f64::NAN,
                    sra: f64::NAN,
                    nz: f64::NAN,
                    fpr: f64::NAN,
                    tpr: f64::NAN,
                    art: f64::NAN,
                });
                TableRow {
                    example: self.config.example_id,
                    sigma: self.config.sigma,
                    w: self.config.w,
                    n: self.config.n_t,
                    method: s.method.to_string(),
                    mse: m.mse,
                    sra: m.sra,
                    nz: m.nz,
                    fpr: m.fpr,
                    tpr: m.tpr,
                    art: m.art,
                    failures: s.failures,
                }
            })
            .collect()
    }
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_table_json(path: &Path, rows: &[TableRow]) -> Result<()> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
