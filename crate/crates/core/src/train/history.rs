use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{Error, Result};

/// One metric-log row: a training step (loss set) or a validation result
/// (metric name and value set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub stage: Stage,
    pub train_loss: Option<f64>,
    pub valid_metric_name: Option<String>,
    pub valid_metric_value: Option<f64>,
}

impl MetricRow {
    pub fn train(step: usize, stage: Stage, loss: f64) -> Self {
        Self {
            step,
            stage,
            train_loss: Some(loss),
            valid_metric_name: None,
            valid_metric_value: None,
        }
    }

    pub fn valid(step: usize, stage: Stage, name: &str, value: f64) -> Self {
        Self {
            step,
            stage,
            train_loss: None,
            valid_metric_name: Some(name.to_string()),
            valid_metric_value: Some(value),
        }
    }
}

/// Per-step loss terms of risk fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbrRow {
    pub step: usize,
    pub mbr_term: f64,
    pub rnnt_term: f64,
    pub total: f64,
}

/// Step and value of the lowest `metric` in the log; ties go to the later
/// step.
pub fn select_best(log: &[MetricRow], metric: &str) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for row in log {
        if row.valid_metric_name.as_deref() != Some(metric) {
            continue;
        }
        let Some(v) = row.valid_metric_value else {
            continue;
        };
        if best.is_none_or(|(_, b)| v <= b) {
            best = Some((row.step, v));
        }
    }
    best
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// `step,stage,train_loss,valid_metric_name,valid_metric_value`.
pub fn write_metric_log(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, path.as_ref())
}

pub fn read_metric_log(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    read_rows(path.as_ref())
}

/// `step,mbr_term,rnnt_term,total`.
pub fn write_mbr_log(rows: &[MbrRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, path.as_ref())
}

pub fn read_mbr_log(path: impl AsRef<Path>) -> Result<Vec<MbrRow>> {
    read_rows(path.as_ref())
}
