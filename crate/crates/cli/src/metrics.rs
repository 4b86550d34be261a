//! Metrics CSV files.
//!
//! Each file starts with a `# <kind> v<version>` comment naming the fixed
//! column order, followed by a regular header row and the data rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use aerial_marl::EvalPoint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const METRICS_HEADER: &str = "# aerial-metrics v1";
pub const AGGREGATE_HEADER: &str = "# aerial-aggregate v1";
pub const SWEEP_HEADER: &str = "# aerial-sweep v1";
pub const TALLY_HEADER: &str = "# aerial-best-count v1";
pub const EVAL_HEADER: &str = "# aerial-eval v1";
pub const PCA_HEADER: &str = "# aerial-pca v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub env_steps: usize,
    pub episodes: usize,
    pub train_loss: Option<f64>,
    pub epsilon: f64,
    pub mean_return: f64,
    pub win_rate: f64,
    pub ci_half_width: f64,
    pub wall_seconds: Option<f64>,
}

impl MetricsRow {
    pub fn from_point(run_id: &str, seed: u64, p: &EvalPoint, wall_clock: bool) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            env_steps: p.env_steps,
            episodes: p.episodes,
            train_loss: p.train_loss,
            epsilon: p.epsilon,
            mean_return: p.eval.mean_return,
            win_rate: p.eval.win_rate,
            ci_half_width: p.eval.ci_half_width,
            wall_seconds: wall_clock.then_some(p.wall_seconds),
        }
    }
}

/// Seed-aggregated evaluation point: mean ± 1.96·SE over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub run_id: String,
    /// Evaluation index, or `final` for each run's last evaluation.
    pub point: String,
    /// Largest environment step among the runs at this point.
    pub env_steps: usize,
    pub runs: usize,
    pub mean_return: f64,
    pub return_ci: f64,
    pub mean_win_rate: f64,
    pub win_rate_ci: f64,
}

/// Sample mean and the normal-approximation 95% half-width `1.96·s/√n`
/// (0 for a single value).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    aerial_marl::mean_ci(values)
}

/// Aggregates runs that share an evaluation schedule, aligned by
/// evaluation index, plus one `final` row over each run's last point.
pub fn aggregate(run_id: &str, runs: &[Vec<MetricsRow>]) -> Vec<AggregateRow> {
    let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    let row = |point: String, rows: Vec<&MetricsRow>| {
        let returns: Vec<f64> = rows.iter().map(|r| r.mean_return).collect();
        let wins: Vec<f64> = rows.iter().map(|r| r.win_rate).collect();
        let (mean_return, return_ci) = mean_ci95(&returns);
        let (mean_win_rate, win_rate_ci) = mean_ci95(&wins);
        AggregateRow {
            run_id: run_id.into(),
            point,
            env_steps: rows.iter().map(|r| r.env_steps).max().unwrap_or(0),
            runs: rows.len(),
            mean_return,
            return_ci,
            mean_win_rate,
            win_rate_ci,
        }
    };
    for k in 0..longest {
        let rows: Vec<&MetricsRow> = runs.iter().filter_map(|r| r.get(k)).collect();
        out.push(row(k.to_string(), rows));
    }
    let last: Vec<&MetricsRow> = runs.iter().filter_map(|r| r.last()).collect();
    if !last.is_empty() {
        out.push(row("final".into(), last));
    }
    out
}

pub fn write_rows<T: Serialize>(path: &Path, header: &str, rows: &[T], columns: &[&str]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.into(),
        message: e.to_string(),
    };
    let mut buf = Vec::new();
    writeln!(buf, "{header}").expect("writing to memory");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        // Written explicitly so header-only files still carry the columns.
        w.write_record(columns).map_err(csv_err)?;
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_rows(&text, header).map_err(|message| CliError::Csv {
        path: path.into(),
        message,
    })
}

pub fn parse_rows<T: DeserializeOwned>(text: &str, header: &str) -> Result<Vec<T>, String> {
    let (first, rest) = text.split_once('\n').ok_or("empty file")?;
    if first != header {
        return Err(format!("expected `{header}`, found `{first}`"));
    }
    csv::Reader::from_reader(rest.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| e.to_string())
}

pub const METRICS_COLUMNS: [&str; 10] = [
    "run_id",
    "seed",
    "env_steps",
    "episodes",
    "train_loss",
    "epsilon",
    "mean_return",
    "win_rate",
    "ci_half_width",
    "wall_seconds",
];

pub const AGGREGATE_COLUMNS: [&str; 8] = [
    "run_id",
    "point",
    "env_steps",
    "runs",
    "mean_return",
    "return_ci",
    "mean_win_rate",
    "win_rate_ci",
];

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    write_rows(path, METRICS_HEADER, rows, &METRICS_COLUMNS)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    read_rows(path, METRICS_HEADER)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), CliError> {
    write_rows(path, AGGREGATE_HEADER, rows, &AGGREGATE_COLUMNS)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, CliError> {
    read_rows(path, AGGREGATE_HEADER)
}
