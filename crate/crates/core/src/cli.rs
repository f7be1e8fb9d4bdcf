//! Command-line front end: `simulate`, `fit` and `crime`.
//!
//! Exit codes: 0 on success, 1 on runtime or data failures, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, DATASET_ENV};
use crate::datamodel::{GroupData, MultiSourceProblem};
use crate::error::{Error, Result};
use crate::select::{fit_method, FitSettings, Method};
use crate::simlab::{self, ScenarioConfig, TableRow};
use crate::stacking::build_stacked;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable for the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SOTL_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sotl", version, about = "Sparse multi-source transfer learning")]
pub struct Cli {
    /// Directory receiving result files and the run manifest.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = "sotl-output")]
    pub out_dir: PathBuf,

    /// Maximum number of concurrent replications or repeats (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation grid and write one comparison table per (sigma, w).
    Simulate(SimulateArgs),
    /// Fit one estimator to user-supplied group files.
    Fit(FitArgs),
    /// Repeated target/auxiliary experiments on the Communities-and-Crime data.
    Crime(CrimeArgs),
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub example: u8,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    pub w: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub r: usize,
    #[arg(long, value_delimiter = ',', default_value = "sotl,sjets")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub s: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_n: usize,
    /// Largest support size swept by SOTL (default: the data-dependent rule).
    #[arg(long)]
    pub gamma_max: Option<usize>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct FitArgs {
    /// Headered CSV with a `y` column; repeat per group, the first is the target.
    #[arg(long = "group", required = true)]
    pub groups: Vec<PathBuf>,
    #[arg(long, default_value = "sotl")]
    pub method: Method,
    #[arg(long)]
    pub gamma_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: `fit.json` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct CrimeArgs {
    /// Headerless dataset file in the published comma-separated format.
    #[arg(long, env = DATASET_ENV)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub experiment: u8,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "sotl,sjets")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    #[arg(long)]
    pub gamma_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub base_seed: u64,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    if cli.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(Error::InvalidArgument(e.to_string())))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.out_dir, a),
        Command::Fit(a) => cmd_fit(&cli.out_dir, a),
        Command::Crime(a) => cmd_crime(&cli.out_dir, a),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join(format!("{}-manifest.json", manifest.command));
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn settings_with(gamma_max: Option<usize>) -> CliResult<FitSettings> {
    if gamma_max == Some(0) {
        return Err(CliError::Usage("--gamma-max must be at least 1".into()));
    }
    Ok(FitSettings {
        gamma_max,
        ..FitSettings::default()
    })
}

fn number_tag(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

fn cmd_simulate(out_dir: &Path, args: &SimulateArgs) -> CliResult<()> {
    let started = unix_now();
    let settings = settings_with(args.gamma_max)?;
    if args.methods.is_empty() {
        return Err(CliError::Usage("--methods must name at least one method".into()));
    }
    let mut grid = Vec::new();
    for &sigma in &args.sigma {
        for &w in &args.w {
            let mut configs = Vec::new();
            for &n in &args.n {
                let mut cfg = ScenarioConfig::new(args.example, n, sigma, w);
                cfg.p = args.p;
                cfg.s = args.s;
                cfg.r = args.r;
                cfg.test_n = args.test_n;
                cfg.base_seed = args.seed;
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                configs.push(cfg);
            }
            grid.push((sigma, w, configs));
        }
    }

    ensure_dir(out_dir)?;
    let mut outputs = Vec::new();
    for (sigma, w, configs) in grid {
        let mut rows: Vec<TableRow> = Vec::new();
        for cfg in &configs {
            log::info!("example {} sigma {sigma} w {w} n {}", cfg.example_id, cfg.n_t);
            let report = simlab::run_replications(cfg, &args.methods, &settings)?;
            for s in &report.summaries {
                for (rep, err) in &s.errors {
                    log::warn!("{} failed on replication {rep}: {err}", s.method);
                }
            }
            rows.extend(report.table_rows());
        }
        let stem = format!(
            "example{}_sigma{}_w{}",
            args.example,
            number_tag(sigma),
            number_tag(w)
        );
        let csv_path = out_dir.join(format!("{stem}.csv"));
        let json_path = out_dir.join(format!("{stem}.json"));
        simlab::write_table_csv(&csv_path, &rows)?;
        simlab::write_table_json(&json_path, &rows)?;
        outputs.push(csv_path);
        outputs.push(json_path);
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        config: serde_json::json!({ "args": args, "settings": settings }),
        base_seed: args.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    let path = write_manifest(out_dir, &manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Reads a headered group file; every column except `y` is a feature.
pub fn read_group_csv(path: &Path) -> Result<(Vec<String>, GroupData)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let y_col = headers.iter().position(|h| h == "y").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "no `y` column in header".into(),
    })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {}: cannot parse {field:?}", headers[c]),
            })?;
            if c == y_col {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    let design = DMatrix::from_row_slice(n, names.len(), &x);
    let group = GroupData::new(design, DVector::from_vec(y)).map_err(|e| e.tagged(path.display().to_string()))?;
    Ok((names, group))
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    method: &'a str,
    gamma_max: Option<usize>,
    feature_names: &'a [String],
    #[serde(flatten)]
    fit: &'a crate::datamodel::FitResult,
}

fn cmd_fit(out_dir: &Path, args: &FitArgs) -> CliResult<()> {
    let started = unix_now();
    let settings = settings_with(args.gamma_max)?;
    let mut groups = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for path in &args.groups {
        let (cols, group) = read_group_csv(path)?;
        match &names {
            None => names = Some(cols),
            Some(first) if *first != cols => {
                return Err(Error::InvalidProblem(format!(
                    "feature columns of {} ({}) differ from {} ({})",
                    path.display(),
                    cols.len(),
                    args.groups[0].display(),
                    first.len()
                ))
                .into())
            }
            Some(_) => {}
        }
        groups.push(group);
    }
    let names = names.unwrap_or_default();
    let problem = MultiSourceProblem::new(groups, 0)?;
    let system = build_stacked(&problem)?;
    let gamma_max = match args.method {
        Method::Sotl => Some(settings.gamma_max_for(&system)),
        Method::Sjets => None,
    };
    let fit = fit_method(&system, args.method, &settings, args.seed)?;

    ensure_dir(out_dir)?;
    let out = args.out.clone().unwrap_or_else(|| out_dir.join("fit.json"));
    let payload = FitOutput {
        method: args.method.name(),
        gamma_max,
        feature_names: &names,
        fit: &fit,
    };
    let text = serde_json::to_string_pretty(&payload).map_err(Error::from)?;
    std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;

    let manifest = RunManifest {
        command: "fit".into(),
        config: serde_json::json!({ "args": args, "gamma_max_used": gamma_max, "settings": settings }),
        base_seed: args.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: vec![out.clone()],
    };
    write_manifest(out_dir, &manifest)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_crime(out_dir: &Path, args: &CrimeArgs) -> CliResult<()> {
    let started = unix_now();
    let settings = settings_with(args.gamma_max)?;
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let table = dataio::load_crime_csv(&args.data)?;
    let report = dataio::run_empirical(
        &table,
        args.experiment,
        args.repeats,
        &args.methods,
        &settings,
        args.seed,
    )?;
    ensure_dir(out_dir)?;
    let stem = format!("crime_experiment{}", args.experiment);
    let csv_path = out_dir.join(format!("{stem}_lmse.csv"));
    let json_path = out_dir.join(format!("{stem}.json"));
    dataio::write_lmse_csv(&csv_path, &report.records)?;
    dataio::write_report_json(&json_path, &report)?;
    for s in &report.summaries {
        println!(
            "{:<6} mean LMSE {:.4}  median LMSE {:.4}  ({} repeats)",
            s.method, s.mean, s.median, s.repeats
        );
    }
    let manifest = RunManifest {
        command: "crime".into(),
        config: serde_json::json!({
            "args": args,
            "settings": settings,
            "retained_predictors": table.p_c,
            "dropped_columns": table.provenance,
        }),
        base_seed: args.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: vec![csv_path, json_path],
    };
    write_manifest(out_dir, &manifest)?;
    Ok(())
}
