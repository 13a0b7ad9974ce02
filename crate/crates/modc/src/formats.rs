//! File-format contracts: JSONL for problems, trajectories, and profiles;
//! CSV for pass@k curves and balance histograms.
//!
//! Problem records are `{"id", "nums", "target"}`. Trajectory rows inline the
//! problem plus `mode`, `heuristic`, `seed`, `solved`, `expanded`, `steps`,
//! the mode-agnostic `trace` token stream, and (once discovery ran) an
//! optional `mode_cluster` annotation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countdown::{verify_expression, Expression, Problem, Step};
use crate::datagen::TrainRecord;
use crate::passk::{CurvePoint, PassKCurve, PasskError};
use crate::sampler::BalanceHistogram;
use crate::search::{HeuristicKind, Mode};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Curve(#[from] PasskError),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|source| FormatError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|source| FormatError::Json {
            line: i + 1,
            source,
        })?);
    }
    Ok(items)
}

/// Pretty-printed single-document JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| FormatError::Json { line: 0, source })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|source| FormatError::Json { line: 0, source })
}

/// One training example as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub id: String,
    pub nums: Vec<u32>,
    pub target: u32,
    pub mode: Mode,
    pub heuristic: HeuristicKind,
    pub seed: u64,
    pub solved: bool,
    pub expanded: usize,
    pub steps: Vec<Step>,
    pub trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_cluster: Option<usize>,
}

impl TrainRow {
    pub fn from_record(record: &TrainRecord) -> Self {
        TrainRow {
            id: record.problem.id.clone(),
            nums: record.problem.nums.clone(),
            target: record.problem.target,
            mode: record.trajectory.mode_used,
            heuristic: record.trajectory.heuristic,
            seed: record.trajectory.seed,
            solved: record.trajectory.solved,
            expanded: record.trajectory.expanded_nodes,
            steps: record
                .trajectory
                .solution
                .as_ref()
                .map(|e| e.steps.clone())
                .unwrap_or_default(),
            trace: record.trajectory.trace_tokens(),
            mode_cluster: None,
        }
    }

    pub fn problem(&self) -> Problem {
        let mut nums = self.nums.clone();
        nums.sort_unstable();
        Problem {
            id: self.id.clone(),
            nums,
            target: self.target,
        }
    }

    pub fn expression(&self) -> Expression {
        Expression::new(self.steps.clone())
    }

    /// Replays the stored steps against the stored problem.
    pub fn verify(&self) -> bool {
        verify_expression(&self.problem(), &self.expression())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    k: u64,
    strategy: String,
    testset: String,
    value: f64,
    n_samples: u64,
    stderr: f64,
}

/// Curves CSV with columns (k, strategy, testset, value, n_samples, stderr).
pub fn write_curves_csv(path: &Path, curves: &[PassKCurve]) -> Result<(), FormatError> {
    let mut writer = csv::Writer::from_path(path)?;
    for curve in curves {
        for p in &curve.points {
            writer.serialize(CurveRow {
                k: p.k,
                strategy: curve.strategy.clone(),
                testset: curve.testset.clone(),
                value: p.value,
                n_samples: p.n_samples,
                stderr: p.stderr,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads curves back, grouping rows by (strategy, testset) in file order.
pub fn read_curves_csv(path: &Path) -> Result<Vec<PassKCurve>, FormatError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut groups: Vec<(String, String, Vec<CurvePoint>)> = Vec::new();
    for row in reader.deserialize() {
        let row: CurveRow = row?;
        let point = CurvePoint {
            k: row.k,
            value: row.value,
            n_samples: row.n_samples,
            stderr: row.stderr,
        };
        match groups
            .iter_mut()
            .find(|(s, t, _)| *s == row.strategy && *t == row.testset)
        {
            Some((_, _, points)) => points.push(point),
            None => groups.push((row.strategy, row.testset, vec![point])),
        }
    }
    if groups.is_empty() {
        return Err(FormatError::SchemaMismatch(format!(
            "{} contains no curve rows",
            path.display()
        )));
    }
    groups
        .into_iter()
        .map(|(strategy, testset, points)| Ok(PassKCurve::new(strategy, testset, points)?))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramRow {
    policy: String,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

/// Histogram CSV with columns (policy, bin_lo, bin_hi, count).
pub fn write_histograms_csv(path: &Path, histograms: &[BalanceHistogram]) -> Result<(), FormatError> {
    let mut writer = csv::Writer::from_path(path)?;
    for hist in histograms {
        for (i, &count) in hist.counts.iter().enumerate() {
            writer.serialize(HistogramRow {
                policy: hist.policy.clone(),
                bin_lo: hist.bin_edges[i],
                bin_hi: hist.bin_edges[i + 1],
                count,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}
