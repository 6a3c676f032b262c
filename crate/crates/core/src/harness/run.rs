//! Experiment orchestration: sample, observe, cluster, compare, recover, evaluate.

use super::config::{Algorithm, ExperimentConfig, MissingRecoveryMode, Precision, SampleLayout, ThresholdMode};
use super::report::{evaluate, write_diagnostics, write_recovered_csv, Algo2Summary, DiagnosticLine, ErrorReport, RunStatus};
use crate::algo2::{algo2_oracle, derive_seed, run_algorithm2};
use crate::cluster::{
    build_all_clusters, build_cluster_missing, build_proxy_table, build_proxy_table_missing, calibrate_threshold,
    mask_table, noisy_table, sandwich_check, write_binary_dump, BlockOptions, Calibration, Cluster, ClusterParams,
    ProxyTable,
};
use crate::error::{Error, Result};
use crate::linalg::Real;
use crate::noise::{MissingModel, NoisyOracle};
use crate::recovery::{recover_all, recover_all_missing, Comparator, RecoveredMetric};
use crate::spaces::{circle_grid, sample_points, SampleSet, SpaceKind};
use std::time::Instant;

const STREAM_SAMPLE: u64 = 11;
const STREAM_NOISE: u64 = 12;
const STREAM_PILOT: u64 = 13;
const STREAM_VALIDATION: u64 = 14;

/// Everything a run produced, before any file is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ErrorReport,
    /// Global sample indices of the recovered points.
    pub indices: Vec<usize>,
    pub metric: RecoveredMetric,
    pub comparator: Comparator,
    /// Proxy table of the Algorithm 1 pipelines.
    pub proxy: Option<ProxyTable>,
    pub calibration: Option<Calibration>,
    pub diagnostics: Vec<DiagnosticLine>,
}

/// `X` of an Algorithm 1 run, drawn from `seed`.
pub fn algo1_sample(cfg: &ExperimentConfig, seed: u64) -> Result<SampleSet> {
    let (n, n0, layout) = match cfg.algorithm {
        Algorithm::Algo1Complete { n, n0, sample } | Algorithm::Algo1Missing { n, n0, sample, .. } => (n, n0, sample),
        Algorithm::Algo2 { .. } => return Err(Error::Config("not an Algorithm 1 configuration".into())),
    };
    match layout {
        SampleLayout::Random => sample_points(&cfg.space, n, n0, seed),
        SampleLayout::Grid => circle_grid(n, n0),
    }
}

/// The observation oracle a configuration defines.
pub fn build_oracle(cfg: &ExperimentConfig) -> Result<NoisyOracle> {
    cfg.validate()?;
    match cfg.algo2() {
        Some(a2) => algo2_oracle(cfg.space, cfg.noise, &a2),
        None => {
            let sample = algo1_sample(cfg, derive_seed(cfg.master_seed, STREAM_SAMPLE))?;
            NoisyOracle::new(cfg.space, sample, cfg.noise, cfg.missing, derive_seed(cfg.master_seed, STREAM_NOISE))
        }
    }
}

/// `ε^{−2d−2}·ln(1/ε)` with unit constants.
pub fn paper_required_n(epsilon: f64, dim: usize) -> f64 {
    epsilon.powi(-(2 * dim as i32) - 2) * (1.0 / epsilon).ln()
}

fn algorithm_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.algorithm {
        Algorithm::Algo1Complete { .. } => "Algo1Complete",
        Algorithm::Algo1Missing { .. } => "Algo1Missing",
        Algorithm::Algo2 { .. } => "Algo2",
    }
}

/// Runs the configured pipeline, writes artifacts when an output directory is set,
/// and folds any error into a failure report.
pub fn run_experiment(cfg: &ExperimentConfig) -> ErrorReport {
    let name = algorithm_name(cfg);
    let result = execute(cfg).and_then(|out| {
        write_artifacts(cfg, &out)?;
        Ok(out.report)
    });
    result.unwrap_or_else(|e| {
        let mut report = ErrorReport::failure(name, &e);
        report.configured_n = cfg.sample_size();
        if let Algorithm::Algo1Complete { n0, .. } | Algorithm::Algo1Missing { n0, .. } = cfg.algorithm {
            report.net_size = n0;
            report.paper_required_n = paper_required_n(cfg.epsilon, cfg.space.intrinsic_dim());
        }
        if let Some(dir) = &cfg.output.dir {
            // The failure report is best effort; the returned report carries the error either way.
            let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("report.json"), report.to_json()));
        }
        report
    })
}

/// Runs the configured pipeline without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = match cfg.algorithm {
        Algorithm::Algo2 { .. } => run_algo2(cfg)?,
        _ if cfg.precision == Precision::F32 => run_algo1::<f32>(cfg)?,
        _ => run_algo1::<f64>(cfg)?,
    };
    out.report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Writes `report.json`, `recovered.csv`, `diagnostics.jsonl` and optional dumps.
pub fn write_artifacts(cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    let Some(dir) = &cfg.output.dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    write_recovered_csv(&dir.join("recovered.csv"), &out.metric, &out.indices)?;
    write_diagnostics(&dir.join("diagnostics.jsonl"), &out.diagnostics)?;
    if cfg.output.dump_tables {
        write_binary_dump(&dir.join("comparator.bin"), out.comparator.values.iter().copied())?;
    }
    std::fs::write(dir.join("report.json"), out.report.to_json())?;
    Ok(())
}

/// Threshold of the complete-data clusters and the pilot calibration behind it.
pub fn resolve_threshold<T: Real>(cfg: &ExperimentConfig, params: &ClusterParams) -> Result<(f64, Option<Calibration>)> {
    let t = &cfg.threshold;
    match t.mode {
        ThresholdMode::Schedule => Ok((params.tau_complete(), None)),
        ThresholdMode::Fixed => Ok((t.value.expect("validated"), None)),
        ThresholdMode::Calibrated => {
            let base = t.pilot_seed.unwrap_or_else(|| derive_seed(cfg.master_seed, STREAM_PILOT));
            let sample = algo1_sample(cfg, derive_seed(base, STREAM_SAMPLE))?;
            let pilot = NoisyOracle::new(cfg.space, sample, cfg.noise, cfg.missing, derive_seed(base, STREAM_NOISE))?;
            let f = noisy_table::<T>(&pilot);
            let outer = cfg.limits.sandwich_outer * params.epsilon;
            let cal = calibrate_threshold(&pilot, &f, params.delta, outer, BlockOptions { block_rows: t.block_rows });
            if !(cal.tau > 0.0) {
                return Err(Error::Config("threshold calibration found no positive statistic".into()));
            }
            Ok((cal.tau * t.scale, Some(cal)))
        }
    }
}

fn finish_status(report: &mut ErrorReport, cfg: &ExperimentConfig) {
    if report.paper_required_n > report.configured_n as f64 {
        report.under_sampled = true;
        report.tags.push("under-sampled".into());
    }
    if report.contract_triples == 0 {
        report.tags.push("vacuous-contract".into());
    }
    let l = &cfg.limits;
    if report.sandwich_fraction() > l.max_sandwich_fraction || report.contract_fraction() > l.max_contract_fraction {
        report.status = RunStatus::ContractViolation;
    }
}

fn run_algo1<T: Real>(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let oracle = build_oracle(cfg)?;
    let (n, n0) = (oracle.len(), oracle.net_size());
    let missing_pipeline = matches!(cfg.algorithm, Algorithm::Algo1Missing { .. });
    let mut diagnostics = Vec::new();
    let mut calibration = None;
    let (params, tau, clusters, proxy) = if missing_pipeline {
        let mut p = ClusterParams::missing(&cfg.space, &cfg.noise, &cfg.missing, cfg.epsilon)?;
        p.threshold_scale = cfg.threshold.scale;
        if cfg.threshold.mode == ThresholdMode::Fixed {
            p.tau_override = cfg.threshold.value;
        }
        let f = noisy_table::<T>(&oracle);
        let m = mask_table::<T>(&oracle);
        let mut clusters = Vec::with_capacity(n0);
        for x in 0..n0 {
            let (c, d) = build_cluster_missing(&f, &m, &p, x)?;
            diagnostics.push(DiagnosticLine::MissingCluster {
                center: x,
                failed_overlap: d.failed_overlap,
                failed_fourth_order: d.failed_fourth_order,
            });
            clusters.push(c);
        }
        drop((f, m));
        let proxy = build_proxy_table_missing::<T>(&oracle, &clusters, p.min_count_threshold(n));
        (p, p.tau_missing(), clusters, proxy)
    } else {
        let mut p = ClusterParams::complete(&cfg.space, &cfg.noise, cfg.epsilon)?;
        p.threshold_scale = cfg.threshold.scale;
        let (tau, cal) = resolve_threshold::<T>(cfg, &p)?;
        calibration = cal;
        let f = noisy_table::<T>(&oracle);
        let clusters = build_all_clusters(&f, tau, BlockOptions { block_rows: cfg.threshold.block_rows });
        drop(f);
        let proxy = build_proxy_table::<T>(&oracle, &clusters);
        (p, tau, clusters, proxy)
    };
    let mut report = ErrorReport::empty(algorithm_name(cfg));
    report.threshold = Some(tau);
    tally_sandwich(&oracle, &clusters, &params, cfg, &mut report, &mut diagnostics);
    // Sandwich counts stay in the failure path too, so degenerate clusters surface with context.
    let proxy = proxy?;
    let cmp = Comparator::from_proxy(&proxy, params.epsilon)?;
    for row in cmp.contract_rows(|i, j| oracle.true_dist(i, j), cfg.limits.contract_gap * cfg.epsilon) {
        report.contract_triples += row.triples;
        report.contract_breaches += row.breaches;
        diagnostics.push((&row).into());
    }
    let (metric, failed) = match cfg.algorithm {
        Algorithm::Algo1Missing { recovery, r, .. } if recovery == MissingRecoveryMode::Graph || cmp.has_infinite() => {
            let r = r.unwrap_or_else(|| cfg.missing.parameters().0);
            let rec = recover_all_missing(&cmp, r)?;
            (rec.metric, rec.failures.len())
        }
        _ => (recover_all(&cmp)?, 0),
    };
    let indices: Vec<usize> = (0..n0).collect();
    let eval = evaluate(&metric, &cfg.space, &oracle.sample, &indices)?;
    report.max_additive_error = eval.max_additive_error;
    report.mean_additive_error = eval.mean_additive_error;
    report.evaluated_pairs = eval.evaluated_pairs;
    report.failed_pairs = failed;
    report.configured_n = n;
    report.net_size = n0;
    report.paper_required_n = paper_required_n(cfg.epsilon, cfg.space.intrinsic_dim());
    report.anchor_info = Some(metric.anchor_info.clone());
    if calibration.is_some() {
        report.tags.push("calibrated-threshold".into());
    }
    if cfg.missing == MissingModel::None && missing_pipeline {
        report.tags.push("all-present-masks".into());
    }
    finish_status(&mut report, cfg);
    Ok(RunOutput { report, indices, metric, comparator: cmp, proxy: Some(proxy), calibration, diagnostics })
}

fn tally_sandwich(
    oracle: &NoisyOracle,
    clusters: &[Cluster],
    params: &ClusterParams,
    cfg: &ExperimentConfig,
    report: &mut ErrorReport,
    diagnostics: &mut Vec<DiagnosticLine>,
) {
    let outer = cfg.limits.sandwich_outer * params.epsilon;
    for c in clusters {
        let s = sandwich_check(oracle, c, params.delta, outer);
        report.sandwich_centers += 1;
        report.sandwich_breaches += usize::from(!s.holds());
        diagnostics.push(DiagnosticLine::Sandwich { center: c.center, inner_ok: s.inner_ok, outer_ok: s.outer_ok });
    }
}

fn run_algo2(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let a2 = cfg.algo2().expect("Algo2 configuration");
    let Algorithm::Algo2 { validation_points, .. } = cfg.algorithm else { unreachable!() };
    let (state, out) = run_algorithm2(cfg.space, cfg.noise, &a2)?;
    let space = &cfg.space;
    let sample = &state.oracle.sample;
    let centers = out.centers.centers.clone();
    let m = centers.len();
    let mut report = evaluate(&out.metric, space, sample, &centers)?;
    report.algorithm = "Algo2".into();
    let mut diagnostics: Vec<DiagnosticLine> = out.diagnostics.iter().cloned().map(DiagnosticLine::Iteration).collect();

    let mut min_sep = f64::INFINITY;
    for i in 0..m {
        for j in 0..i {
            min_sep = min_sep.min(space.dist(&sample.points[centers[i]], &sample.points[centers[j]]));
        }
    }
    let validation = if space.kind == SpaceKind::Circle {
        circle_grid(validation_points, validation_points)?
    } else {
        sample_points(space, validation_points, validation_points, derive_seed(cfg.master_seed, STREAM_VALIDATION))?
    };
    let cover = validation
        .points
        .iter()
        .map(|v| centers.iter().map(|&c| space.dist(v, &sample.points[c])).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);

    let bound = 18.0 * a2.c * out.schedule.sigma;
    let mut cc_breaches = 0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let estimate = out.comparator[i * m + j];
            let mean = state.oracle.mean_distance(centers[i], centers[j]);
            let breach = (estimate - mean).abs() >= bound;
            cc_breaches += usize::from(breach);
            diagnostics.push(DiagnosticLine::ClusterCluster { i, j, estimate, mean, breach });
        }
    }
    let cmp = Comparator::new(m, out.comparator.clone(), cfg.epsilon)?;
    let truth = |i: usize, j: usize| state.oracle.true_dist(centers[i], centers[j]);
    for row in cmp.contract_rows(truth, cfg.limits.contract_gap * cfg.epsilon) {
        report.contract_triples += row.triples;
        report.contract_breaches += row.breaches;
        diagnostics.push((&row).into());
    }
    let s = &out.schedule;
    report.configured_n = state.oracle.len();
    report.net_size = m;
    report.paper_required_n = s.paper_n1 + s.paper_n2 + s.paper_n3;
    report.anchor_info = Some(out.metric.anchor_info.clone());
    report.algo2 = Some(Algo2Summary {
        terminated: out.terminated,
        centers: m,
        r: s.r,
        sigma: s.sigma,
        min_center_separation: min_sep,
        cover_radius: cover,
        cluster_cluster_breaches: cc_breaches,
        cluster_cluster_pairs: m * m.saturating_sub(1),
        clusterapprox_violations: out.diagnostics.iter().map(|d| d.clusterapprox_violations).sum(),
    });
    if !out.terminated {
        report.tags.push("not-terminated".into());
    }
    finish_status(&mut report, cfg);
    let cc_fraction = cc_breaches as f64 / (m * m.saturating_sub(1)).max(1) as f64;
    if cc_fraction > cfg.limits.max_contract_fraction {
        report.status = RunStatus::ContractViolation;
    }
    Ok(RunOutput { report, indices: centers, metric: out.metric, comparator: cmp, proxy: None, calibration: None, diagnostics })
}
