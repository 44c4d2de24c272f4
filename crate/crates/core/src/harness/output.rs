//! `runs.csv` (one row per seed and round) and `summary.json`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::Summary;
use super::runner::RunRecord;
use crate::{Error, Result};

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct CsvRow {
    seed: u64,
    t: usize,
    context: usize,
    action: usize,
    realized_loss: f64,
    expected_loss: f64,
    best_loss: f64,
    regret: f64,
    arrivals: usize,
    pending: usize,
}

pub fn write_runs_csv(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for run in runs {
        for r in &run.rounds {
            w.serialize(CsvRow {
                seed: run.seed,
                t: r.t,
                context: r.context,
                action: r.action,
                realized_loss: r.realized_loss,
                expected_loss: r.expected_loss,
                best_loss: r.best_loss,
                regret: r.regret,
                arrivals: r.arrivals,
                pending: r.pending,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes both files into `dir`, creating it if needed; returns their paths.
pub fn write_outputs(
    dir: &Path,
    runs: &[RunRecord],
    summary: &Summary,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let runs_path = dir.join(RUNS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_runs_csv(&runs_path, runs)?;
    write_summary(&summary_path, summary)?;
    Ok((runs_path, summary_path))
}
