//! Error reports, evaluation against exact distances, and report artifacts.

use crate::algo2::IterationDiag;
use crate::error::{invalid, Error, Result};
use crate::recovery::{AnchorInfo, ContractRow, RecoveredMetric};
use crate::spaces::{GroundTruthSpace, SampleSet};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Outcome class of a run; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    ContractViolation,
    Failure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::ContractViolation => 2,
            RunStatus::Failure => 1,
        }
    }
}

/// Module error carried by a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for FailureInfo {
    fn from(e: &Error) -> Self {
        Self { kind: e.kind().to_string(), message: e.to_string() }
    }
}

/// Algorithm 2 quantities checked against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algo2Summary {
    pub terminated: bool,
    pub centers: usize,
    /// Separation radius `r` of the schedule.
    pub r: f64,
    pub sigma: f64,
    pub min_center_separation: f64,
    /// Largest distance from a validation point to its nearest center.
    pub cover_radius: f64,
    /// Ordered pairs with `|A(i, j) − f(x̂_i, x̂_j)| ≥ 18Cσ`.
    pub cluster_cluster_breaches: usize,
    pub cluster_cluster_pairs: usize,
    pub clusterapprox_violations: usize,
}

/// Result of one run or evaluation.
///
/// Errors are computed after both matrices are normalized to maximum entry `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub status: RunStatus,
    pub failure: Option<FailureInfo>,
    pub algorithm: String,
    pub max_additive_error: f64,
    pub mean_additive_error: f64,
    /// Unordered pairs `i < j` compared.
    pub evaluated_pairs: usize,
    pub contract_breaches: u64,
    pub contract_triples: u64,
    pub sandwich_breaches: usize,
    pub sandwich_centers: usize,
    /// Pairs the missing-data recovery could not reach.
    pub failed_pairs: usize,
    pub threshold: Option<f64>,
    pub configured_n: usize,
    pub net_size: usize,
    /// Sample size from the asymptotic requirement with unit constants.
    pub paper_required_n: f64,
    pub under_sampled: bool,
    pub tags: Vec<String>,
    pub anchor_info: Option<AnchorInfo>,
    pub algo2: Option<Algo2Summary>,
    pub runtime_seconds: f64,
}

impl ErrorReport {
    /// Empty report with zero counts.
    pub fn empty(algorithm: &str) -> Self {
        Self {
            status: RunStatus::Ok,
            failure: None,
            algorithm: algorithm.to_string(),
            max_additive_error: 0.0,
            mean_additive_error: 0.0,
            evaluated_pairs: 0,
            contract_breaches: 0,
            contract_triples: 0,
            sandwich_breaches: 0,
            sandwich_centers: 0,
            failed_pairs: 0,
            threshold: None,
            configured_n: 0,
            net_size: 0,
            paper_required_n: 0.0,
            under_sampled: false,
            tags: Vec::new(),
            anchor_info: None,
            algo2: None,
            runtime_seconds: 0.0,
        }
    }

    /// Structured failure report.
    pub fn failure(algorithm: &str, e: &Error) -> Self {
        Self { status: RunStatus::Failure, failure: Some(e.into()), ..Self::empty(algorithm) }
    }

    /// The report with timing cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { runtime_seconds: 0.0, ..self.clone() }
    }

    pub fn sandwich_fraction(&self) -> f64 {
        fraction(self.sandwich_breaches as f64, self.sandwich_centers as f64)
    }

    pub fn contract_fraction(&self) -> f64 {
        fraction(self.contract_breaches as f64, self.contract_triples as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn fraction(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Compares a recovered metric over the points `y` of `sample` with exact distances.
pub fn evaluate(
    recovered: &RecoveredMetric,
    space: &GroundTruthSpace,
    sample: &SampleSet,
    y: &[usize],
) -> Result<ErrorReport> {
    let n = recovered.n;
    if y.len() != n || recovered.distances.len() != n * n {
        return invalid(format!("recovered metric has size {n} but {} indices were given", y.len()));
    }
    if let Some(&bad) = y.iter().find(|&&i| i >= sample.len()) {
        return invalid(format!("index {bad} is outside the sample of size {}", sample.len()));
    }
    let mut truth = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            truth[i * n + j] = space.dist(&sample.points[y[i]], &sample.points[y[j]]);
        }
    }
    let scale = |v: &[f64]| {
        let m = v.iter().copied().filter(|x| x.is_finite()).fold(0.0f64, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    let (st, sr) = (scale(&truth), scale(&recovered.distances));
    let mut report = ErrorReport::empty("evaluate");
    let (mut max, mut sum) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let e = (recovered.get(i, j) / sr - truth[i * n + j] / st).abs();
            max = if e.is_nan() { f64::INFINITY } else { max.max(e) };
            sum += e;
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    report.max_additive_error = max;
    report.mean_additive_error = if pairs > 0 { sum / pairs as f64 } else { 0.0 };
    report.evaluated_pairs = pairs;
    report.net_size = n;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    i: usize,
    j: usize,
    distance: f64,
}

/// Writes the upper triangle as `i,j,distance` with global sample indices.
pub fn write_recovered_csv(path: &Path, recovered: &RecoveredMetric, y: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for a in 0..recovered.n {
        for b in (a + 1)..recovered.n {
            w.serialize(CsvRow { i: y[a], j: y[b], distance: recovered.get(a, b) }).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_recovered_csv`]; returns the sorted indices and the metric over them.
pub fn read_recovered_csv(path: &Path) -> Result<(Vec<usize>, RecoveredMetric)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows: Vec<CsvRow> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let mut idx: Vec<usize> = rows.iter().flat_map(|r| [r.i, r.j]).collect();
    idx.sort_unstable();
    idx.dedup();
    let n = idx.len();
    let pos = |g: usize| idx.binary_search(&g).expect("index collected above");
    let mut d = vec![f64::NAN; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for row in &rows {
        let (a, b) = (pos(row.i), pos(row.j));
        if a == b {
            return invalid(format!("diagonal entry ({}, {}) in recovered CSV", row.i, row.j));
        }
        d[a * n + b] = row.distance;
        d[b * n + a] = row.distance;
    }
    if d.iter().any(|v| v.is_nan()) {
        return invalid("recovered CSV does not cover every pair");
    }
    Ok((idx, RecoveredMetric { n, distances: d, anchor_info: AnchorInfo::Trivial }))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

/// One line of the diagnostics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiagnosticLine {
    Sandwich { center: usize, inner_ok: bool, outer_ok: bool },
    Contract { x: usize, triples: u64, breaches: u64 },
    MissingCluster { center: usize, failed_overlap: usize, failed_fourth_order: usize },
    Iteration(IterationDiag),
    ClusterCluster { i: usize, j: usize, estimate: f64, mean: f64, breach: bool },
}

impl From<&ContractRow> for DiagnosticLine {
    fn from(r: &ContractRow) -> Self {
        DiagnosticLine::Contract { x: r.x, triples: r.triples, breaches: r.breaches }
    }
}

/// Breach totals recounted from a diagnostics file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiagnosticCounts {
    pub sandwich_breaches: usize,
    pub sandwich_centers: usize,
    pub contract_breaches: u64,
    pub contract_triples: u64,
    pub cluster_cluster_breaches: usize,
}

pub fn write_diagnostics(path: &Path, lines: &[DiagnosticLine]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l).map_err(|e| Error::InvalidInput(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn recount_diagnostics(path: &Path) -> Result<DiagnosticCounts> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut c = DiagnosticCounts::default();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DiagnosticLine =
            serde_json::from_str(&line).map_err(|e| Error::InvalidInput(format!("diagnostics: {e}")))?;
        match d {
            DiagnosticLine::Sandwich { inner_ok, outer_ok, .. } => {
                c.sandwich_centers += 1;
                c.sandwich_breaches += usize::from(!(inner_ok && outer_ok));
            }
            DiagnosticLine::Contract { triples, breaches, .. } => {
                c.contract_triples += triples;
                c.contract_breaches += breaches;
            }
            DiagnosticLine::ClusterCluster { breach, .. } => c.cluster_cluster_breaches += usize::from(breach),
            DiagnosticLine::MissingCluster { .. } | DiagnosticLine::Iteration(_) => {}
        }
    }
    Ok(c)
}
