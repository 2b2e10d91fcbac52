//! Repeated seeded runs aggregated over logarithmic time bins.

use std::io::Write;

use rphedge::hedging::{Algorithm, MetricsRow};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const METRICS: [&str; 4] = ["n_subproblems", "steplength", "subopt_rel", "feas_err"];

fn metric(row: &MetricsRow, name: &str) -> Option<f64> {
    match name {
        "n_subproblems" => Some(row.n_subproblems as f64),
        "steplength" => Some(row.steplength),
        "subopt_rel" => row.subopt_rel,
        "feas_err" => row.feas_err,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// `count` edges spaced evenly in log scale over `[lo, hi]`.
pub fn log_bins(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count > 0);
    if count == 1 || hi == lo {
        return vec![hi];
    }
    let ratio = (hi / lo).ln();
    let mut edges: Vec<f64> =
        (0..count).map(|i| lo * (ratio * i as f64 / (count - 1) as f64).exp()).collect();
    edges[count - 1] = hi;
    edges
}

/// Edges spanning the positive times of all runs.
pub fn bins_for(runs: &[&[MetricsRow]], count: usize) -> Option<Vec<f64>> {
    let times = runs.iter().flat_map(|rows| rows.iter().map(|r| r.wall_time_s)).filter(|&t| t > 0.0);
    let (lo, hi) = times.fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t), hi.max(t)));
    (hi > 0.0).then(|| log_bins(lo, hi, count))
}

/// Value of the last row at or before `time`.
pub fn carry_forward(rows: &[MetricsRow], time: f64, name: &str) -> Option<f64> {
    let seen = rows.partition_point(|r| r.wall_time_s <= time);
    seen.checked_sub(1).and_then(|i| metric(&rows[i], name))
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub bin: usize,
    pub time_s: f64,
    pub metric: &'static str,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Runs with a value at this time.
    pub count: usize,
}

pub fn aggregate(algorithm: Algorithm, runs: &[&[MetricsRow]], edges: &[f64]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for (bin, &time) in edges.iter().enumerate() {
        for name in METRICS {
            let mut values: Vec<f64> = runs.iter().filter_map(|rows| carry_forward(rows, time, name)).collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            out.push(AggregateRow {
                algorithm,
                bin,
                time_s: time,
                metric: name,
                median: quantile(&values, 0.5),
                q1: quantile(&values, 0.25),
                q3: quantile(&values, 0.75),
                count: values.len(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub repetition: usize,
    pub seed: u64,
    /// `ok`, or the error category.
    pub status: String,
    pub termination: String,
    pub n_subproblems: Option<u64>,
    pub elapsed_seconds: Option<f64>,
    pub subopt_rel: Option<f64>,
    pub message: String,
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::runtime(format!("csv: {e}")))?;
    }
    writer.flush().map_err(|e| CliError::runtime(format!("csv: {e}")))
}
