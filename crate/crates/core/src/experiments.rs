//! The five experiments as tables, and their on-disk artifacts.
//!
//! Tables are a pure function of `(config, experiment, seed)`; worker count
//! only changes wall time. Floats are written with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classifier::{fnr_curve_for, optimize_threshold, simulate_ensemble};
use crate::config::{Experiment, OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::sensitivity::{optimal_sensitivity, sensitivity_distribution};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(&'static str),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => (*s).to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Float(x) => serde_json::Value::from(*x),
            Cell::Int(i) => serde_json::Value::from(*i),
            Cell::Text(s) => serde_json::Value::from(*s),
        }
    }
}

fn flag(b: bool) -> Cell {
    Cell::Int(b as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// `{"columns": [...], "rows": [[...], ...]}`; non-finite floats become null.
    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<serde_json::Value>> =
            self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
        let doc = serde_json::json!({ "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("json serialization");
        s.push('\n');
        s
    }

    pub fn file_name(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => format!("{}.csv", self.name),
            OutputFormat::Json => format!("{}.json", self.name),
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

pub const T1_SWEEP_COLUMNS: &[&str] =
    &["gd_density_nm2", "gamma_bulk_s1", "gamma_surface_s1", "gamma_gd_s1", "t1_seconds"];
pub const SENSITIVITY_MAP_COLUMNS: &[&str] = &[
    "diameter_nm",
    "standoff_nm",
    "tau_opt_s",
    "eta_density",
    "min_molecules",
    "min_rna_copies",
];
pub const SENSITIVITY_DIST_COLUMNS: &[&str] = &[
    "sensor_index",
    "diameter_nm",
    "gd_density_nm2",
    "standoff_nm",
    "nv_offset_nm",
    "min_molecules",
    "detectable_flag",
];
pub const ENSEMBLE_HIST_COLUMNS: &[&str] = &["sample_index", "class", "group_size", "noisy_flag", "pl_value"];
pub const ENSEMBLE_REPORT_COLUMNS: &[&str] =
    &["group_size", "noisy_flag", "threshold", "fnr", "fpr", "balanced_accuracy"];
pub const FNR_CURVE_COLUMNS: &[&str] = &[
    "rna_copies",
    "group_size",
    "threshold",
    "fnr",
    "fpr",
    "fnr_worst",
    "fpr_worst",
    "fnr_best",
    "fpr_best",
    "balanced_accuracy",
];

pub fn t1_sweep(config: &RunConfig) -> Result<Table> {
    let model = config.model()?;
    let rows = config
        .t1_sweep
        .densities
        .iter()
        .map(|&n| {
            let b = model.relaxation(&config.t1_sweep_sensor(n))?;
            Ok(vec![
                Cell::Float(n),
                Cell::Float(b.gamma_bulk),
                Cell::Float(b.gamma_surface),
                Cell::Float(b.gamma_gd),
                Cell::Float(b.t1()),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(Table {
        name: "t1_sweep",
        columns: T1_SWEEP_COLUMNS,
        rows,
    })
}

/// Rows are diameter-major. Undetectable points get NaN τ and infinite counts.
pub fn sensitivity_map(config: &RunConfig) -> Result<Table> {
    let model = config.model()?;
    let readout = config.readout();
    let s = &config.sensitivity;
    let points: Vec<(f64, f64)> = s
        .diameters
        .iter()
        .flat_map(|&d| s.standoffs.iter().map(move |&l| (d, l)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(d, l)| {
            let sensor = crate::physics::SensorConfig {
                diameter: d,
                nv_offset: s.nv_offset,
                gd_standoff: l,
                gd_density: s.gd_density,
                defect_density: config.physics.defect_density,
                t1_bulk: config.physics.t1_bulk,
                gd_per_cdna: config.physics.gd_per_cdna,
            };
            let r = optimal_sensitivity(&sensor, &model, &readout, s.integration_time)?;
            let (tau, eta, molecules, copies) = match r {
                Some(r) => (r.tau_opt, r.eta_density, r.min_molecules, r.min_rna_copies),
                None => (f64::NAN, f64::INFINITY, f64::INFINITY, f64::INFINITY),
            };
            Ok(vec![
                Cell::Float(d),
                Cell::Float(l),
                Cell::Float(tau),
                Cell::Float(eta),
                Cell::Float(molecules),
                Cell::Float(copies),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(Table {
        name: "sensitivity_map",
        columns: SENSITIVITY_MAP_COLUMNS,
        rows,
    })
}

pub fn sensitivity_dist(config: &RunConfig, seed: u64) -> Result<Table> {
    let outcomes = sensitivity_distribution(
        &config.sensitivity_spec(seed),
        &config.model()?,
        &config.readout(),
        config.sensitivity.integration_time,
    )?;
    let rows = outcomes
        .iter()
        .map(|o| {
            vec![
                Cell::Int(o.index as u64),
                Cell::Float(o.sensor.diameter),
                Cell::Float(o.sensor.gd_density),
                Cell::Float(o.sensor.gd_standoff),
                Cell::Float(o.sensor.nv_offset),
                Cell::Float(o.result.map_or(f64::INFINITY, |r| r.min_molecules)),
                flag(o.detectable()),
            ]
        })
        .collect();
    Ok(Table {
        name: "sensitivity_dist",
        columns: SENSITIVITY_DIST_COLUMNS,
        rows,
    })
}

/// PL samples per class, group size and noise flag, plus a sidecar with
/// the optimal threshold of each population.
pub fn ensemble_hist(config: &RunConfig, seed: u64) -> Result<(Table, Table)> {
    let ensemble = simulate_ensemble(&config.ensemble_spec(seed), &config.model()?, &config.readout())?;
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for &k in &config.ensemble_hist.group_sizes {
        for noisy in [false, true] {
            let pop = ensemble.group(k, noisy)?;
            for (class, values) in [("neg", &pop.negative), ("pos", &pop.positive)] {
                for (i, &pl) in values.iter().enumerate() {
                    rows.push(vec![
                        Cell::Int(i as u64),
                        Cell::Text(class),
                        Cell::Int(k as u64),
                        flag(noisy),
                        Cell::Float(pl),
                    ]);
                }
            }
            let r = optimize_threshold(&pop.negative, &pop.positive)?;
            report.push(vec![
                Cell::Int(k as u64),
                flag(noisy),
                Cell::Float(r.threshold),
                Cell::Float(r.fnr),
                Cell::Float(r.fpr),
                Cell::Float(r.balanced_accuracy),
            ]);
        }
    }
    Ok((
        Table {
            name: "ensemble_hist",
            columns: ENSEMBLE_HIST_COLUMNS,
            rows,
        },
        Table {
            name: "ensemble_report",
            columns: ENSEMBLE_REPORT_COLUMNS,
            rows: report,
        },
    ))
}

pub fn fnr_curve(config: &RunConfig, seed: u64) -> Result<Table> {
    let spec = config.ensemble_spec(seed);
    let model = config.model()?;
    let readout = config.readout();
    let ensemble = simulate_ensemble(&spec, &model, &readout)?;
    let loads = config.fnr_curve.loads();
    let mut rows = Vec::new();
    for &k in &config.fnr_curve.group_sizes {
        for p in fnr_curve_for(&ensemble, &spec, &model, &readout, k, &loads)? {
            let r = p.report;
            rows.push(vec![
                Cell::Int(p.copies),
                Cell::Int(p.group_size as u64),
                Cell::Float(r.threshold),
                Cell::Float(r.fnr),
                Cell::Float(r.fpr),
                Cell::Float(r.fnr_worst),
                Cell::Float(r.fpr_worst),
                Cell::Float(r.fnr_best),
                Cell::Float(r.fpr_best),
                Cell::Float(r.balanced_accuracy),
            ]);
        }
    }
    Ok(Table {
        name: "fnr_curve",
        columns: FNR_CURVE_COLUMNS,
        rows,
    })
}

/// All tables of one experiment, computed on the current rayon pool.
pub fn tables(config: &RunConfig, experiment: Experiment, seed: u64) -> Result<Vec<Table>> {
    config.validate()?;
    Ok(match experiment {
        Experiment::T1Sweep => vec![t1_sweep(config)?],
        Experiment::SensitivityMap => vec![sensitivity_map(config)?],
        Experiment::SensitivityDist => vec![sensitivity_dist(config, seed)?],
        Experiment::EnsembleHist => {
            let (hist, report) = ensemble_hist(config, seed)?;
            vec![hist, report]
        }
        Experiment::FnrCurve => vec![fnr_curve(config, seed)?],
    })
}

/// Run `f` on a dedicated pool of `workers` threads (0 = all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// As [`tables`] on a dedicated pool of `workers` threads.
pub fn tables_with_workers(
    config: &RunConfig,
    experiment: Experiment,
    seed: u64,
    workers: usize,
) -> Result<Vec<Table>> {
    with_workers(workers, || tables(config, experiment, seed))?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    /// Canonical TOML of the effective configuration.
    pub config: String,
    pub outputs: Vec<OutputRecord>,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write through a temporary sibling and rename into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io_error(path, e)
        })
}

fn write_all(tables: &[Table], dir: &Path, format: OutputFormat, written: &mut Vec<PathBuf>) -> Result<Vec<OutputRecord>> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut records = Vec::new();
    for table in tables {
        let name = table.file_name(format);
        let path = dir.join(&name);
        let body = table.render(format);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
        records.push(OutputRecord {
            file: name,
            rows: table.rows.len(),
            sha256: hex::encode(Sha256::digest(body.as_bytes())),
        });
    }
    Ok(records)
}

/// Run an experiment and write its tables and manifest into `dir`. On any
/// failure, files written by this call are removed.
pub fn run(
    config: &RunConfig,
    experiment: Experiment,
    seed: u64,
    workers: usize,
    dir: &Path,
    format: OutputFormat,
) -> Result<RunManifest> {
    let start = Instant::now();
    let tables = tables_with_workers(config, experiment, seed, workers)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut written = Vec::new();
    let result = (|| {
        let outputs = write_all(&tables, dir, format, &mut written)?;
        let effective = RunConfig {
            experiment: Some(experiment),
            ..config.clone()
        };
        let manifest = RunManifest {
            tool: "nvrelax",
            version: env!("CARGO_PKG_VERSION"),
            experiment,
            seed,
            workers: if workers == 0 { rayon::current_num_threads() } else { workers },
            wall_time_s,
            config: effective.to_canonical(),
            outputs,
        };
        let path = dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        body.push('\n');
        write_atomic(&path, body.as_bytes())?;
        Ok(manifest)
    })();
    if result.is_err() {
        for path in written {
            let _ = fs::remove_file(path);
        }
    }
    result
}
