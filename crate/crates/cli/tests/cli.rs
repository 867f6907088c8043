use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use selfsim::measure::MeasureSpec;
use selfsim::spectrum::{fit_counting_slope, theoretical_slope};
use selfsim_cli::pipeline::{self, parse_smallball_csv, sha256_hex, Goal};
use selfsim_cli::RunConfig;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn selfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn figure() -> String {
    fixture("measures/figure.json").display().to_string()
}

#[test]
fn validate_reports_each_outcome_with_its_exit_code() {
    let ok = selfsim(&["validate", "--measure", &figure()]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).trim(), "valid");

    let flat = fixture("measures/flat_levels.json").display().to_string();
    let bad = selfsim(&["validate", "--measure", &flat]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).lines().any(|l| l.starts_with("criterion 3")), "{}", stdout(&bad));

    let json = selfsim(&["validate", "--measure", &flat, "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["valid"], false);
    assert!(v["violations"].as_array().unwrap().iter().any(|x| x["criterion"] == 3));

    let missing = selfsim(&["validate", "--measure", "/nonexistent/measure.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("/nonexistent/measure.json"));

    let not_a_measure = fixture("kernels/wiener.json").display().to_string();
    assert_eq!(selfsim(&["validate", "--measure", &not_a_measure]).status.code(), Some(2));
}

#[test]
fn depth_zero_completes_but_records_the_failed_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = selfsim(&["pipeline", "--measure", &figure(), "--depth", "0", "--out", &out]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let atoms = fs::read_to_string(dir.path().join("atoms.csv")).unwrap();
    assert_eq!(atoms.lines().count(), 3, "header plus two atoms");
    let slope: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("slope.json")).unwrap()).unwrap();
    assert!(slope["fit"].is_null());
    assert!(slope["error"].as_str().unwrap().contains("slope fit failed"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "failed");
    assert!(stdout(&o).contains("fit failed"));
}

#[test]
fn flag_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let m = figure();
    for extra in [
        vec!["--precision-bits", "32"],
        vec!["--eps", "0.1,-2"],
        vec!["--eps", "abc"],
        vec!["--method", "laplace"],
        vec!["--kernel", "/nonexistent/kernel.json"],
    ] {
        let mut args = vec!["eigs", "--measure", m.as_str(), "--depth", "2", "--out", out.as_str()];
        args.extend(extra.iter().copied());
        let o = selfsim(&args);
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
    }
    let flat = fixture("measures/flat_levels.json").display().to_string();
    let o = selfsim(&["pipeline", "--measure", &flat, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("criterion 3"));
}

#[test]
fn report_renders_echoes_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = selfsim(&[
        "pipeline", "--measure", &figure(), "--depth", "24", "--precision-bits", "256",
        "--eps", "0.1,1e-2,1e-3,1e-4", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let text = selfsim(&["report", "--out", &out]);
    assert_eq!(text.status.code(), Some(0));
    assert!(stdout(&text).contains("slope theory 1.11622"), "{}", stdout(&text));
    assert!(stdout(&text).contains("saddlepoint"));

    let json = selfsim(&["report", "--out", &out, "--format", "json"]);
    assert_eq!(json.stdout, fs::read(dir.path().join("report.json")).unwrap());

    fs::write(dir.path().join("report.json"), "{\n  \"tool\": \"selfsim\",\n  oops\n}\n").unwrap();
    let bad = selfsim(&["report", "--out", &out]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 3"), "{}", stderr(&bad));

    let empty = tempfile::tempdir().unwrap();
    let missing = selfsim(&["report", "--out", &empty.path().display().to_string()]);
    assert_eq!(missing.status.code(), Some(2));
}

/// Re-derives every number of the report from the artifacts it cites.
#[test]
fn report_numbers_are_traceable_to_the_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(fixture("measures/figure.json"), dir.path());
    cfg.depth = 24;
    cfg.precision_bits = 256;
    cfg.eps_list = ["0.3", "0.1", "1e-2", "1e-3"].map(String::from).to_vec();
    cfg.methods = "mc,saddlepoint,asymptotic".split(',').map(|m| m.parse().unwrap()).collect();
    cfg.samples = 20_000;
    let outcome = pipeline::run(&cfg, Goal::Full).unwrap();
    let report = outcome.report.unwrap();

    for (name, sha) in report["artifacts"].as_object().unwrap() {
        assert_eq!(sha.as_str().unwrap(), sha256_hex(&fs::read(dir.path().join(name)).unwrap()), "{name}");
    }
    let sp = pipeline::read_spectrum(dir.path()).unwrap();
    assert_eq!(report["measure_digest"], sp.source().measure_digest.as_str());
    assert_eq!(report["measure_digest"], MeasureSpec::figure().digest().as_str());
    assert_eq!(report["eigenvalues"], sp.len());
    let fit = fit_counting_slope(&sp, None).unwrap();
    assert_eq!(report["fit"]["slope"].as_f64().unwrap(), fit.slope);
    assert_eq!(report["fit"]["points_used"], fit.points_used);
    let (theory, q) = theoretical_slope(&MeasureSpec::figure(), 1);
    assert_eq!(report["theory"]["slope"].as_f64().unwrap(), theory);
    assert_eq!(report["theory"]["q"].as_f64().unwrap(), q);
    assert_eq!(report["slope_ratio"].as_f64().unwrap(), fit.slope / theory);

    let rows = parse_smallball_csv(&fs::read_to_string(dir.path().join("smallball.csv")).unwrap()).unwrap();
    let table = report["smallball"].as_array().unwrap();
    assert_eq!(rows.len(), table.len());
    for (r, t) in rows.iter().zip(table) {
        assert_eq!(t["eps"], r.eps.as_str());
        assert_eq!(t["method"], r.method.name());
        assert_eq!(t["log_prob"].as_f64().unwrap(), r.log_prob);
    }
    // Monte Carlo cannot reach 1e-3 with 20k samples: recorded, not fatal.
    assert!(report["failures"].as_array().unwrap().iter().any(|f| f.as_str().unwrap().contains("method=mc")));
    assert_eq!(report["log_square"]["points_used"], 4);
}

#[test]
fn reruns_reuse_intact_artifacts_and_redo_tampered_ones() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(fixture("measures/mirrored.json"), dir.path());
    cfg.kernel = Some(fixture("kernels/brownian_bridge.json"));
    cfg.depth = 16;
    cfg.precision_bits = 192;
    let first = pipeline::run(&cfg, Goal::Full).unwrap();
    assert!(first.timings.iter().all(|t| !t.reused));
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    let eigs = read("eigs.csv");
    let smallball = read("smallball.csv");

    let second = pipeline::run(&cfg, Goal::Full).unwrap();
    assert!(second.timings.iter().all(|t| t.reused), "{:?}", second.timings);
    assert_eq!(read("eigs.csv"), eigs);

    fs::write(dir.path().join("eigs.csv"), "index,lambda\n1,0.5\n").unwrap();
    let third = pipeline::run(&cfg, Goal::Full).unwrap();
    let eig_stage = third.timings.iter().find(|t| t.name == "eigs").unwrap();
    assert!(!eig_stage.reused);
    assert_eq!(read("eigs.csv"), eigs);
    assert_eq!(read("smallball.csv"), smallball);

    // A different seed only invalidates the small-ball stage.
    cfg.seed = 7;
    let fourth = pipeline::run(&cfg, Goal::Full).unwrap();
    let reused: Vec<bool> = fourth.timings.iter().map(|t| t.reused).collect();
    assert_eq!(reused, vec![true, true, true, false]);
}

#[test]
fn stage_commands_stop_where_asked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let four = fixture("measures/four_interval.json").display().to_string();
    let o = selfsim(&["atoms", "--measure", &four, "--depth", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("atoms 12"), "{}", stdout(&o));
    assert!(!dir.path().join("eigs.csv").exists());

    let o = selfsim(&["slope", "--measure", &four, "--depth", "24", "--precision-bits", "192", "--out", &out, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ratio = v["slope"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.05, "four-interval slope ratio {ratio}");
    assert!(!dir.path().join("smallball.csv").exists());
    assert!(!dir.path().join("report.json").exists());
}
