use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neckglue::config::ExperimentConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn neckglue(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neckglue"))
        .args(args)
        .output()
        .expect("spawn neckglue")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

#[test]
fn sample_configs_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let a = ExperimentConfig::parse(&text).unwrap();
        let b = ExperimentConfig::parse(&a.echo()).unwrap();
        assert_eq!(a, b, "{}", path.display());
        assert_eq!(a.echo(), b.echo());
        a.build().unwrap();
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn malformed_config_names_line_and_field() {
    let text = std::fs::read_to_string(configs().join("rotation.json")).unwrap();
    let bad = text.replace("\"ode_step\": 0.02", "\"ode_step\": \"fast\"");
    let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
    assert!(err.contains("numerics.ode_step"), "{err}");
    assert!(err.contains("line "), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, bad).unwrap();
    let out = neckglue(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_reports_skew_defect() {
    let out = neckglue(&["validate", "--config", &cfg("invalid_j.json")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("J† = −J"), "{err}");
    assert!(err.contains("defect 2.000e0"), "{err}");

    let ok = neckglue(&["validate", "--config", &cfg("exponential.json")]);
    assert_eq!(ok.status.code(), Some(0));
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eigen_on_rotation_finds_multiples_of_pi_over_11() {
    let dir = tempfile::tempdir().unwrap();
    let out = neckglue(&[
        "eigen",
        "--config",
        &cfg("rotation.json"),
        "--out",
        dir.path().to_str().unwrap(),
        "--fd-oracle",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("spectrum.csv"));
    let lambdas: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    for want in [-PI / 11.0, 0.0, PI / 11.0] {
        assert!(
            lambdas.iter().any(|l| (l - want).abs() < 1e-8),
            "{want} not in {lambdas:?}"
        );
    }
    for r in &rows {
        assert_eq!(r[1], "1");
        assert!(r[2].parse::<f64>().unwrap() < 1e-3);
    }
    let fd = read_csv(&dir.path().join("fd_spectrum.csv"));
    assert!(!fd.is_empty());
}

#[test]
fn eigvecs_csv_has_one_column_pair_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("rotation.json")).unwrap();
    let mut cfgv = ExperimentConfig::parse(&text).unwrap();
    cfgv.eigen.eigvecs = true;
    cfgv.eigen.window = Some(0.5);
    let p = dir.path().join("c.json");
    std::fs::write(&p, cfgv.echo()).unwrap();
    let out = neckglue(&[
        "eigen",
        "--config",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let spectrum = read_csv(&dir.path().join("spectrum.csv"));
    let text = std::fs::read_to_string(dir.path().join("eigvecs.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    // n = 2 complex components per eigenvector.
    assert_eq!(header.len(), 1 + 4 * spectrum.len());
    assert_eq!(text.lines().count() - 1, 11 * 52 + 1);
}

#[test]
fn sweep_on_exponential_passes_ledger_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = vec!["sweep", "--config"];
        let c = cfg("exponential.json");
        args.push(&c);
        args.extend(["--out", dir.to_str().unwrap()]);
        args.extend(extra);
        let out = neckglue(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(a.path(), &[]);
    run(b.path(), &["--jobs", "1"]);
    let csv_a = std::fs::read(a.path().join("sweep.csv")).unwrap();
    let csv_b = std::fs::read(b.path().join("sweep.csv")).unwrap();
    assert_eq!(csv_a, csv_b);

    let rows = read_csv(&a.path().join("sweep.csv"));
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert_eq!(r.len(), 11);
        assert_eq!(&r[1..6], ["2", "1", "1", "0", "0"]);
        // 17 significant digits.
        assert_eq!(r[0].split('e').next().unwrap().len(), 18);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["ledger"], "pass");
    assert_eq!(report["config"]["numerics"]["ode_step"], 0.02);
    assert!(report["fits"]["lambda_vs_length"]["rate"].as_f64().unwrap() > 0.95);
    assert!(report["r0"]["stabilization"].is_number());
}

#[test]
fn ends_json_lists_kernels_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = neckglue(&[
        "ends",
        "--config",
        &cfg("rotation_perp.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ends.json")).unwrap()).unwrap();
    assert_eq!(v["end1"]["kappa"], 1);
    assert_eq!(v["end2"]["kappa"], 1);
    assert_eq!(v["dim_lsum"], 2);
    assert_eq!(v["dim_k_inf"], 0);
    assert_eq!(v["end1"]["lagrangian"]["lagrangian"], true);
}

#[test]
fn check_subset_and_bad_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = neckglue(&["check", "--only", "2,7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
    assert_eq!(v["pass"], true);
    assert_eq!(neckglue(&["check", "--only", "11"]).status.code(), Some(1));
    assert_eq!(neckglue(&["bogus"]).status.code(), Some(1));
}
