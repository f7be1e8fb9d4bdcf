//! Communities-and-Crime ingest, state-based transfer splits and the repeated
//! empirical experiments.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{GroupData, MultiSourceProblem};
use crate::error::{Error, Result};
use crate::select::{fit_method, FitSettings, Method};
use crate::simlab::replication_seed;
use crate::stacking::build_stacked;

/// Environment variable naming the dataset file.
pub const DATASET_ENV: &str = "SOTL_CRIME_DATA";

pub const MISSING_MARKER: &str = "?";

/// Attribute names of the published file, in column order.
pub const CRIME_COLUMNS: [&str; 128] = [
    "state", "county", "community", "communityname", "fold", "population",
    "householdsize", "racepctblack", "racePctWhite", "racePctAsian", "racePctHisp",
    "agePct12t21", "agePct12t29", "agePct16t24", "agePct65up", "numbUrban", "pctUrban",
    "medIncome", "pctWWage", "pctWFarmSelf", "pctWInvInc", "pctWSocSec", "pctWPubAsst",
    "pctWRetire", "medFamInc", "perCapInc", "whitePerCap", "blackPerCap", "indianPerCap",
    "AsianPerCap", "OtherPerCap", "HispPerCap", "NumUnderPov", "PctPopUnderPov",
    "PctLess9thGrade", "PctNotHSGrad", "PctBSorMore", "PctUnemployed", "PctEmploy",
    "PctEmplManu", "PctEmplProfServ", "PctOccupManu", "PctOccupMgmtProf",
    "MalePctDivorce", "MalePctNevMarr", "FemalePctDiv", "TotalPctDiv", "PersPerFam",
    "PctFam2Par", "PctKids2Par", "PctYoungKids2Par", "PctTeen2Par",
    "PctWorkMomYoungKids", "PctWorkMom", "NumIlleg", "PctIlleg", "NumImmig",
    "PctImmigRecent", "PctImmigRec5", "PctImmigRec8", "PctImmigRec10", "PctRecentImmig",
    "PctRecImmig5", "PctRecImmig8", "PctRecImmig10", "PctSpeakEnglOnly",
    "PctNotSpeakEnglWell", "PctLargHouseFam", "PctLargHouseOccup", "PersPerOccupHous",
    "PersPerOwnOccHous", "PersPerRentOccHous", "PctPersOwnOccup", "PctPersDenseHous",
    "PctHousLess3BR", "MedNumBR", "HousVacant", "PctHousOccup", "PctHousOwnOcc",
    "PctVacantBoarded", "PctVacMore6Mos", "MedYrHousBuilt", "PctHousNoPhone",
    "PctWOFullPlumb", "OwnOccLowQuart", "OwnOccMedVal", "OwnOccHiQuart", "RentLowQ",
    "RentMedian", "RentHighQ", "MedRent", "MedRentPctHousInc", "MedOwnCostPctInc",
    "MedOwnCostPctIncNoMtg", "NumInShelters", "NumStreet", "PctForeignBorn",
    "PctBornSameState", "PctSameHouse85", "PctSameCity85", "PctSameState85",
    "LemasSwornFT", "LemasSwFTPerPop", "LemasSwFTFieldOps", "LemasSwFTFieldPerPop",
    "LemasTotalReq", "LemasTotReqPerPop", "PolicReqPerOffic", "PolicPerPop",
    "RacialMatchCommPol", "PctPolicWhite", "PctPolicBlack", "PctPolicHisp",
    "PctPolicAsian", "PctPolicMinor", "OfficAssgnDrugUnits", "NumKindsDrugsSeiz",
    "PolicAveOTWorked", "LandArea", "PopDens", "PctUsePubTrans", "PolicCars",
    "PolicOperBudg", "LemasPctPolicOnPatr", "LemasGangUnitDeploy",
    "LemasPctOfficDrugUn", "PolicBudgPerPop", "ViolentCrimesPerPop",
];

/// Leading identifier columns; the first one is kept as the grouping key.
pub const IDENTIFIER_COLUMNS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeRow {
    pub state: i64,
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeTable {
    pub rows: Vec<CrimeRow>,
    pub feature_names: Vec<String>,
    pub p_c: usize,
    pub provenance: Vec<DroppedColumn>,
}

impl CrimeTable {
    pub fn state_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        for row in &self.rows {
            *counts.entry(row.state).or_insert(0) += 1;
        }
        counts
    }

    fn state_rows(&self, state: i64) -> Vec<&CrimeRow> {
        self.rows.iter().filter(|r| r.state == state).collect()
    }
}

fn parse_number(path: &Path, line: usize, column: &str, field: &str) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("column {column}: cannot parse {field:?} as a finite number"),
        }),
    }
}

/// Reads the comma-separated file (no header; a header row starting with
/// `state` is tolerated and skipped).
pub fn load_crime_csv(path: &Path) -> Result<CrimeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;

    let mut raw: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if i == 0 && rec.get(0).map(str::trim) == Some(CRIME_COLUMNS[0]) {
            continue;
        }
        if rec.len() != CRIME_COLUMNS.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", CRIME_COLUMNS.len(), rec.len()),
            });
        }
        raw.push((line, rec));
    }
    if raw.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no data rows".into(),
        });
    }

    let target_col = CRIME_COLUMNS.len() - 1;
    let mut provenance: Vec<DroppedColumn> = CRIME_COLUMNS[1..IDENTIFIER_COLUMNS]
        .iter()
        .map(|name| DroppedColumn {
            name: name.to_string(),
            reason: "identifier".into(),
        })
        .collect();
    let mut kept = Vec::new();
    for col in IDENTIFIER_COLUMNS..target_col {
        let missing = raw
            .iter()
            .filter(|(_, rec)| rec[col].trim() == MISSING_MARKER)
            .count();
        if missing > 0 {
            provenance.push(DroppedColumn {
                name: CRIME_COLUMNS[col].to_string(),
                reason: format!("missing marker in {missing} of {} rows", raw.len()),
            });
        } else {
            kept.push(col);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidProblem("no predictors left after dropping missing columns".into()));
    }

    let mut rows = Vec::with_capacity(raw.len());
    for (line, rec) in &raw {
        let state = parse_number(path, *line, CRIME_COLUMNS[0], &rec[0])?;
        if state.fract() != 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("column state: {state} is not an integer code"),
            });
        }
        let features = kept
            .iter()
            .map(|&c| parse_number(path, *line, CRIME_COLUMNS[c], &rec[c]))
            .collect::<Result<Vec<f64>>>()?;
        let target = parse_number(path, *line, CRIME_COLUMNS[target_col], &rec[target_col])?;
        rows.push(CrimeRow {
            state: state as i64,
            features,
            target,
        });
    }
    let table = CrimeTable {
        rows,
        feature_names: kept.iter().map(|&c| CRIME_COLUMNS[c].to_string()).collect(),
        p_c: kept.len(),
        provenance,
    };
    log::info!(
        "loaded {} rows with {} retained predictors ({} columns dropped)",
        table.rows.len(),
        table.p_c,
        table.provenance.len()
    );
    Ok(table)
}

/// State layout of one empirical experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub target_state: i64,
    pub target_train: usize,
    pub target_test: usize,
    /// `(state, expected rows)` of every auxiliary state.
    pub auxiliaries: &'static [(i64, usize)],
    /// Reported total of selected rows; checked as a warning only.
    pub reported_total: usize,
}

pub fn experiment_spec(experiment_id: u8) -> Result<ExperimentSpec> {
    match experiment_id {
        1 => Ok(ExperimentSpec {
            target_state: 1,
            target_train: 30,
            target_test: 13,
            auxiliaries: &[(6, 278)],
            reported_total: 322,
        }),
        2 => Ok(ExperimentSpec {
            target_state: 9,
            target_train: 44,
            target_test: 25,
            auxiliaries: &[(34, 211), (48, 156)],
            reported_total: 436,
        }),
        other => Err(Error::InvalidArgument(format!(
            "experiment must be 1 or 2, got {other}"
        ))),
    }
}

/// Feature standardization fitted on target training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Sample standard deviations; constant columns get scale 1.
    pub scale: Vec<f64>,
    pub y_mean: f64,
}

impl Standardizer {
    pub fn fit(rows: &[&CrimeRow]) -> Standardizer {
        let n = rows.len() as f64;
        let p = rows[0].features.len();
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(&r.features) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(&r.features).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        for s in scale.iter_mut() {
            let sd = if rows.len() > 1 { (*s / (n - 1.0)).sqrt() } else { 0.0 };
            *s = if sd > 0.0 { sd } else { 1.0 };
        }
        let y_mean = rows.iter().map(|r| r.target).sum::<f64>() / n;
        Standardizer { mean, scale, y_mean }
    }

    pub fn apply(&self, rows: &[&CrimeRow]) -> Result<GroupData> {
        let p = self.mean.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        for r in rows {
            for j in 0..p {
                x.push((r.features[j] - self.mean[j]) / self.scale[j]);
            }
        }
        let y: Vec<f64> = rows.iter().map(|r| r.target - self.y_mean).collect();
        GroupData::new(DMatrix::from_row_slice(rows.len(), p, &x), DVector::from_vec(y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub problem: MultiSourceProblem,
    pub test: GroupData,
    pub standardizer: Standardizer,
}

fn checked_state(table: &CrimeTable, state: i64, expected: usize) -> Result<Vec<&CrimeRow>> {
    let rows = table.state_rows(state);
    if rows.len() != expected {
        return Err(Error::StateCount {
            state,
            expected,
            found: rows.len(),
        });
    }
    Ok(rows)
}

/// Builds the target/auxiliary problem and held-out target rows. The target
/// state's rows are split uniformly at random from `rng_seed`.
pub fn build_experiment(table: &CrimeTable, experiment_id: u8, rng_seed: u64) -> Result<Experiment> {
    let spec = experiment_spec(experiment_id)?;
    let mut target = checked_state(table, spec.target_state, spec.target_train + spec.target_test)?;
    let auxiliaries = spec
        .auxiliaries
        .iter()
        .map(|&(state, n)| checked_state(table, state, n))
        .collect::<Result<Vec<_>>>()?;

    let selected = target.len() + auxiliaries.iter().map(Vec::len).sum::<usize>();
    if selected != spec.reported_total {
        log::warn!(
            "experiment {experiment_id}: selected {selected} rows, reference total is {}",
            spec.reported_total
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    target.shuffle(&mut rng);
    let (train, test) = target.split_at(spec.target_train);

    let standardizer = Standardizer::fit(train);
    let mut groups = vec![standardizer.apply(train)?];
    for aux in &auxiliaries {
        groups.push(standardizer.apply(aux)?);
    }
    Ok(Experiment {
        problem: MultiSourceProblem::new(groups, 0)?,
        test: standardizer.apply(test)?,
        standardizer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmseRecord {
    pub repeat_index: usize,
    pub method: String,
    pub lmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmseSummary {
    pub method: String,
    pub mean: f64,
    pub median: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub experiment: u8,
    pub records: Vec<LmseRecord>,
    pub summaries: Vec<LmseSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Log of the mean squared prediction error on the test rows.
pub fn log_test_mse(beta: &[f64], test: &GroupData) -> f64 {
    let pred = test.design() * DVector::from_column_slice(beta);
    ((test.response() - pred).norm_squared() / test.n() as f64).ln()
}

/// Repeats the experiment with fresh target splits; repeat `i` uses the split
/// seed derived from `(base_seed, i)`.
pub fn run_empirical(
    table: &CrimeTable,
    experiment_id: u8,
    n_repeats: usize,
    methods: &[Method],
    settings: &FitSettings,
    base_seed: u64,
) -> Result<EmpiricalReport> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    experiment_spec(experiment_id)?;
    let per_repeat = (0..n_repeats)
        .into_par_iter()
        .map(|i| -> Result<Vec<LmseRecord>> {
            let tag = |e: Error| e.tagged(format!("repeat {i}"));
            let seed = replication_seed(base_seed, i);
            let exp = build_experiment(table, experiment_id, seed).map_err(tag)?;
            let system = build_stacked(&exp.problem).map_err(tag)?;
            methods
                .iter()
                .map(|&m| {
                    let fit = fit_method(&system, m, settings, seed).map_err(tag)?;
                    Ok(LmseRecord {
                        repeat_index: i,
                        method: m.to_string(),
                        lmse: log_test_mse(&fit.beta_target, &exp.test),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<LmseRecord> = per_repeat.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|m| {
            let name = m.to_string();
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.method == name)
                .map(|r| r.lmse)
                .collect();
            LmseSummary {
                mean: values.iter().sum::<f64>() / values.len() as f64,
                median: median(&values),
                repeats: values.len(),
                method: name,
            }
        })
        .collect();
    Ok(EmpiricalReport {
        experiment: experiment_id,
        records,
        summaries,
    })
}

pub fn write_lmse_csv(path: &Path, records: &[LmseRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for rec in records {
        wtr.serialize(rec)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &EmpiricalReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
