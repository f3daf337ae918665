use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{AccuracyMode, ExperimentConfig};
use super::runner::{Line, MetricsRecord};
use crate::error::{Error, Result};

/// Fraction of the task sequence, counted from the end, that the summary statistic averages.
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    pub failed: bool,
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut config = None;
    let mut records = Vec::new();
    let mut failed = false;
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), n + 1)))?;
        match parsed {
            Line::Config { config: c } => config = Some(c),
            Line::Task(r) => records.push(r),
            Line::Failure { .. } => failed = true,
            Line::Reset { .. } => {}
        }
    }
    let config =
        config.ok_or_else(|| Error::Input(format!("{} has no config line", path.display())))?;
    Ok(MetricsFile {
        path: path.to_path_buf(),
        config,
        records,
        failed,
    })
}

/// Mean accuracy over the last `ceil(fraction * n)` tasks.
pub fn last_fraction_accuracy(
    records: &[MetricsRecord],
    mode: AccuracyMode,
    fraction: f64,
) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let k = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len());
    let tail = &records[records.len() - k..];
    Some(tail.iter().map(|r| r.accuracy(mode)).sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub method: String,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    /// Sample standard deviation across runs; zero for a single run.
    pub std: f64,
    pub dead_final: f64,
}

/// Groups runs by configuration name.
pub fn summarize(files: &[MetricsFile]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<&str, Vec<&MetricsFile>> = BTreeMap::new();
    for f in files {
        groups.entry(&f.config.name).or_default().push(f);
    }
    groups
        .into_iter()
        .map(|(name, runs)| {
            let scores: Vec<f64> = runs
                .iter()
                .filter_map(|f| {
                    last_fraction_accuracy(&f.records, f.config.accuracy, TAIL_FRACTION)
                })
                .collect();
            let dead: Vec<f64> = runs
                .iter()
                .filter_map(|f| f.records.last().map(|r| r.dead_neurons as f64))
                .collect();
            let (mean, std) = mean_std(&scores);
            ReportRow {
                name: name.to_string(),
                method: runs[0].config.intervention.label().to_string(),
                runs: runs.len(),
                failed: runs.iter().filter(|f| f.failed).count(),
                mean,
                std,
                dead_final: mean_std(&dead).0,
            }
        })
        .collect()
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Reads every metrics file, summarizes, and writes a CSV table to `out`.
pub fn report<W: Write>(paths: &[PathBuf], mut out: W) -> Result<Vec<ReportRow>> {
    if paths.is_empty() {
        return Err(Error::Input("no metrics files to report on".into()));
    }
    let files = paths
        .iter()
        .map(|p| read_metrics(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = summarize(&files);
    let err = |e| Error::io("<report output>", e);
    writeln!(
        out,
        "name,method,runs,failed,mean_accuracy,std_accuracy,dead_final"
    )
    .map_err(err)?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.2}",
            r.name, r.method, r.runs, r.failed, r.mean, r.std, r.dead_final
        )
        .map_err(err)?;
    }
    Ok(rows)
}
