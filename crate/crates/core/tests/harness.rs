use georecover::harness::selftest::{check_case, SumLaw};
use georecover::harness::*;
use georecover::recovery::{AnchorInfo, RecoveredMetric};
use georecover::spaces::{circle_grid, GroundTruthSpace};
use std::path::{Path, PathBuf};
use std::process::Command;

const SMALL: &str = r#"
epsilon = 0.25
master_seed = 3

[space]
kind = "Circle"

[noise]
mean = { kind = "Identity" }
dispersion = { kind = "Gaussian", sd = 0.05 }

[algorithm]
kind = "Algo1Complete"
n = 600
n0 = 60

[threshold]
mode = "calibrated"
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL).unwrap()
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text) {
        Err(e) => {
            assert_eq!(e.kind(), "config", "{e}");
            e.to_string()
        }
        Ok(_) => panic!("configuration accepted"),
    }
}

#[test]
fn invalid_configurations_are_config_errors() {
    let msg = config_error(&SMALL.replace("n0 = 60", "n0 = 700"));
    assert!(msg.contains("exceeds"), "{msg}");
    config_error(&SMALL.replace("n0 = 60", "n0 = 600"));
    config_error(&SMALL.replace("n0 = 60", "n0 = 60\nsample = \"grid\"").replace("\"Circle\"", "\"FlatTorus2D\""));
    config_error(&SMALL.replace("\"calibrated\"", "\"fixed\""));
    config_error(&SMALL.replace("\"calibrated\"", "\"fixed\"\nvalue = -1.0"));
    config_error(&SMALL.replace("epsilon = 0.25", "epsilon = 0.75"));
    config_error(&SMALL.replace("master_seed = 3", "master_seed = 3\nunknown = 1"));
    config_error(&SMALL.replace("sd = 0.05", "sd = -0.05"));
    config_error(&format!("{SMALL}\n[missing]\nkind = \"RadiusCutoff\"\nr0 = 0.3\nphi = 0.5\nlambda1 = 0.5\nlambda2 = 0.05\n"));
}

#[test]
fn configurations_roundtrip_through_toml() {
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(config_dir()).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|x| x == "toml")).collect();
    paths.sort();
    assert!(paths.len() >= 3);
    for p in paths {
        let cfg = ExperimentConfig::load(&p).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", p.display());
    }
    let cfg = small();
    assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
}

fn grid_metric(n: usize, f: impl Fn(usize, usize, f64) -> f64) -> (RecoveredMetric, Vec<usize>, georecover::spaces::SampleSet) {
    let sample = circle_grid(n, n).unwrap();
    let space = GroundTruthSpace::circle();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i * n + j] = f(i, j, space.dist(&sample.points[i], &sample.points[j]));
            }
        }
    }
    (RecoveredMetric { n, distances: d, anchor_info: AnchorInfo::Trivial }, (0..n).collect(), sample)
}

#[test]
fn evaluation_examples() {
    let space = GroundTruthSpace::circle();
    let (exact, y, s) = grid_metric(16, |_, _, d| d);
    let r = evaluate(&exact, &space, &s, &y).unwrap();
    assert_eq!((r.max_additive_error, r.mean_additive_error, r.evaluated_pairs), (0.0, 0.0, 120));

    let (half, _, _) = grid_metric(16, |_, _, d| 0.5 * d);
    assert_eq!(evaluate(&half, &space, &s, &y).unwrap().max_additive_error, 0.0);

    // The pair (0, 2) sits at distance 0.5 (bit-reversed grid), away from the maximum 1.
    let (bumped, _, _) = grid_metric(16, |i, j, d| if i.min(j) == 0 && i.max(j) == 2 { d + 0.1 } else { d });
    let r = evaluate(&bumped, &space, &s, &y).unwrap();
    assert!((r.max_additive_error - 0.1).abs() < 1e-12, "{}", r.max_additive_error);
    assert!((r.mean_additive_error - 0.1 / 120.0).abs() < 1e-12);

    let (nan, _, _) = grid_metric(4, |i, j, d| if i + j == 1 { f64::NAN } else { d });
    assert_eq!(evaluate(&nan, &space, &s, &[0, 1, 2, 3]).unwrap().max_additive_error, f64::INFINITY);

    assert!(evaluate(&exact, &space, &s, &y[..15]).is_err());
    let mut far = y.clone();
    far[3] = 99;
    assert!(evaluate(&exact, &space, &s, &far).is_err());
}

#[test]
fn recovered_csv_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("recovered.csv");
    let (m, _, _) = grid_metric(8, |i, j, d| d + 1e-3 * (i * j) as f64);
    let sym = RecoveredMetric {
        distances: (0..64).map(|k| m.get((k / 8).min(k % 8), (k / 8).max(k % 8))).collect(),
        ..m
    };
    let idx = vec![3, 5, 8, 13, 21, 34, 55, 89];
    write_recovered_csv(&path, &sym, &idx).unwrap();
    let (back_idx, back) = read_recovered_csv(&path).unwrap();
    assert_eq!(back_idx, idx);
    assert_eq!(back.distances, sym.distances);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("i,j,distance\n3,5,"));
    std::fs::write(&path, "i,j,distance\n0,1,0.5\n0,2,0.7\n").unwrap();
    assert!(read_recovered_csv(&path).is_err());
    std::fs::write(&path, "i,j,distance\n0,0,0.5\n").unwrap();
    assert!(read_recovered_csv(&path).is_err());
}

#[test]
fn runs_write_artifacts_that_recount_to_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.output.dir = Some(dir.path().to_path_buf());
    cfg.output.dump_tables = true;
    let report = run_experiment(&cfg);
    assert_eq!(report.status, RunStatus::Ok, "{}", report.to_json());
    assert!(report.sandwich_centers == 60 && report.evaluated_pairs == 60 * 59 / 2);
    for f in ["report.json", "recovered.csv", "diagnostics.jsonl", "config.toml", "comparator.bin"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let counts = recount_diagnostics(&dir.path().join("diagnostics.jsonl")).unwrap();
    assert_eq!(counts.sandwich_breaches, report.sandwich_breaches);
    assert_eq!(counts.sandwich_centers, report.sandwich_centers);
    assert_eq!(counts.contract_breaches, report.contract_breaches);
    assert_eq!(counts.contract_triples, report.contract_triples);

    let written: ErrorReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);
    assert_eq!(ExperimentConfig::load(&dir.path().join("config.toml")).unwrap(), cfg);

    let (idx, metric) = read_recovered_csv(&dir.path().join("recovered.csv")).unwrap();
    let oracle = build_oracle(&cfg).unwrap();
    let again = evaluate(&metric, &cfg.space, &oracle.sample, &idx).unwrap();
    assert_eq!(again.max_additive_error, report.max_additive_error);
}

#[test]
fn runs_are_bit_reproducible() {
    let cfg = small();
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert_eq!(a.report.without_timing(), b.report.without_timing());
    assert_eq!(a.metric.distances, b.metric.distances);
    let mut other = cfg.clone();
    other.master_seed += 1;
    assert_ne!(execute(&other).unwrap().metric.distances, a.metric.distances);
}

#[test]
fn failures_become_structured_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.threshold = ThresholdConfig::default();
    cfg.output.dir = Some(dir.path().to_path_buf());
    let report = run_experiment(&cfg);
    assert_eq!(report.status, RunStatus::Failure);
    assert_eq!(report.status.exit_code(), 1);
    let failure = report.failure.as_ref().unwrap();
    assert_eq!(failure.kind, "cluster_degenerate");
    assert_eq!((report.configured_n, report.net_size), (600, 60));
    let written: ErrorReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);
}

#[test]
fn algo2_runs_report_center_checks() {
    let cfg = ExperimentConfig::load(&config_dir().join("circle_algo2.toml")).unwrap();
    let out = execute(&cfg).unwrap();
    let a2 = out.report.algo2.as_ref().unwrap();
    assert!(a2.terminated);
    assert_eq!(a2.centers, out.indices.len());
    assert!(a2.min_center_separation > a2.r);
    assert!(a2.cover_radius <= cfg.epsilon);
    assert_eq!(a2.cluster_cluster_pairs, a2.centers * (a2.centers - 1));
    let summed: usize = out
        .diagnostics
        .iter()
        .filter(|d| matches!(d, georecover::harness::report::DiagnosticLine::ClusterCluster { breach: true, .. }))
        .count();
    assert_eq!(summed, a2.cluster_cluster_breaches);
}

#[test]
fn selftest_edge_cases() {
    let flat = SumLaw { n: 64, sd: 0.0, mean: 0.7 };
    assert_eq!(flat.deviation(1, 0), 0.0);
    let r = check_case(flat, 1.0, 0.1, 1, 100);
    assert_eq!((r.bound, r.empirical), (0.0, 0.0));
    assert!(r.pass);
    let law = SumLaw { n: 64, sd: 0.3, mean: 0.5 };
    let r = check_case(law, 1.0, 0.0, 1, 100);
    assert_eq!((r.bound, r.empirical), (5.0, 1.0));
    assert!(r.pass);
    let t = law.t_for_bound(2.0, 0.01);
    assert!((law.bound(2.0, t) - 0.01).abs() < 1e-12);
    let cfg = SelftestConfig { trials: 200, ..Default::default() };
    let a = concentration_selftest(&cfg);
    assert_eq!(a, concentration_selftest(&cfg));
    assert_eq!(a.cases.len(), 6);
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_georecover")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap() + &String::from_utf8(out.stderr).unwrap())
}

#[test]
fn command_line_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let (code, text) = cli(&["run", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let report: ErrorReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.status, RunStatus::Ok);

    let csv = out_dir.join("recovered.csv");
    let (code, text) = cli(&["evaluate", csv.to_str().unwrap(), cfg_path.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let scored: ErrorReport = serde_json::from_str(&text).unwrap();
    assert_eq!(scored.max_additive_error, report.max_additive_error);

    let (code, text) = cli(&["dump-pair", cfg_path.to_str().unwrap(), "0", "1"]);
    assert_eq!(code, 0, "{text}");
    let line: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(line["mask"], true);

    let (code, text) = cli(&["selftest", "--trials", "100"]);
    assert!(code == 0 || code == 2, "{text}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("n0 = 60", "n0 = 700")).unwrap();
    let (code, text) = cli(&["run", bad.to_str().unwrap()]);
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("\"config\""), "{text}");
}
