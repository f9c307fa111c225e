//! Reproducible experiments over seeded trials, with CSV and JSON output.
//!
//! Trial `k` at measurement count `m` draws everything from
//! `child_seed(child_seed(master_seed, m), k)`, so its result does not depend
//! on which other trials run, or on how many workers run them.

pub mod config;
pub mod experiments;
pub mod stats;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ExperimentKind, PartialConfig};
pub use experiments::{
    Outcome,
    run, run_convergence, run_mdc_scaling, run_noise_floor, run_phase_transition,
    run_regularity_sweep, run_sandwich_audit,
};

use crate::error::{Error, Result};
use crate::rng::child_seed;

pub fn trial_seed(master: u64, m: usize, trial: usize) -> u64 {
    child_seed(child_seed(master, m as u64), trial as u64)
}

/// One pass/fail statement about a run. A failed check makes the CLI exit 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// A CSV file emitted next to the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file_name: &str, header: &[&str]) -> Self {
        Self {
            file_name: file_name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shortest round-trip formatting, so equal floats print identically.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Everything one run produces. `records` and `aggregates` are experiment
/// specific; wall-clock times are kept out of the serialized form so reruns
/// are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport<R, A> {
    pub config: ExperimentConfig,
    pub records: Vec<R>,
    pub aggregates: A,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub wall_clock_ms: Vec<f64>,
}

impl<R: Serialize, A: Serialize> ExperimentReport<R, A> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Writes `summary.json` and every table into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        for table in &self.tables {
            table.write(fs::File::create(dir.join(&table.file_name))?)?;
        }
        Ok(())
    }

    /// Per-trial wall-clock times, in trial order. Not part of the
    /// reproducible output.
    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut table = Table::new("timings.csv", &["record", "wall_clock_ms"]);
        for (i, ms) in self.wall_clock_ms.iter().enumerate() {
            table.push(vec![i.to_string(), format!("{ms:.3}")]);
        }
        table.write(fs::File::create(path)?)
    }
}

/// Runs `f` on a dedicated pool with `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `f` and returns its result with the elapsed milliseconds.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}
