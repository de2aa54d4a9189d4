//! End-to-end checks of the binary: exit codes, output files, report
//! determinism, and config error handling.

use std::path::{Path, PathBuf};
use std::process::Command;

fn hb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hb"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hb-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn balance_polystable_exits_zero() {
    let out = tmp_dir("bal0");
    let status = hb()
        .args(["balance", "--config"])
        .arg(fixture("polystable.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"Converged\""));
    let csv = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(csv.starts_with("step,residual,kn_value,min_eig,max_eig,epsilon"));
    assert!(out.join("meta.json").exists());
}

#[test]
fn balance_unstable_exits_two() {
    let out = tmp_dir("bal2");
    let status = hb()
        .args(["balance", "--config"])
        .arg(fixture("unstable.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"Degenerate\""));
}

#[test]
fn malformed_config_exits_one() {
    let out = tmp_dir("bad");
    let bad = out.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = hb()
        .args(["balance", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn weight_subsheaf_report_value() {
    let out = tmp_dir("wt");
    let status = hb()
        .args(["weight", "--config"])
        .arg(fixture("weight_split.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["mu1_unnormalized"], serde_json::json!(-2));
    assert_eq!(report["result"]["mu2"], serde_json::json!(0));
    assert_eq!(report["result"]["classification"], serde_json::json!("Unstable"));
}

#[test]
fn weight_invalid_subgroup_exits_one() {
    let out = tmp_dir("wtbad");
    // SL-flagged weights that do not sum to zero
    let cfg = serde_json::json!({
        "instance": {
            "twist_degree": 0,
            "bundle_degrees": [2, 0],
            "phi": [[[], []], [[], []]],
            "label": "split-two"
        },
        "k": 3,
        "one_param": {"weights": [1,1,1,1,1,1,1,1,1,1]}
    });
    let path = out.join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let status = hb()
        .args(["weight", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn asymptotics_line_sweep_passes() {
    let out = tmp_dir("asym");
    let status = hb()
        .args(["asymptotics", "--config"])
        .arg(fixture("asymptotics_line.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.starts_with("series,k,value"));
    assert!(csv.contains("bergman_remainder"));
}

#[test]
fn asymptotics_short_range_exits_one() {
    let out = tmp_dir("asymshort");
    let status = hb()
        .args(["asymptotics", "--config"])
        .arg(fixture("asymptotics_line.json"))
        .args(["--k-range", "4:5"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn validate_command_reports_witness() {
    let out = tmp_dir("val");
    let status = hb()
        .args(["validate", "--config"])
        .arg(fixture("unstable.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["witness"]["hint"], serde_json::json!("Unstable"));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let out1 = tmp_dir("det1");
    let out2 = tmp_dir("det2");
    for (out, threads) in [(&out1, "1"), (&out2, "4")] {
        let status = hb()
            .args(["balance", "--config"])
            .arg(fixture("polystable.json"))
            .arg("--out")
            .arg(out)
            .env("HB_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let r1 = std::fs::read(out1.join("report.json")).unwrap();
    let r2 = std::fs::read(out2.join("report.json")).unwrap();
    assert_eq!(r1, r2, "reports differ between runs/thread counts");
    let c1 = std::fs::read(out1.join("steps.csv")).unwrap();
    let c2 = std::fs::read(out2.join("steps.csv")).unwrap();
    assert_eq!(c1, c2, "CSV differs between runs/thread counts");
}

#[test]
fn flag_overrides_apply() {
    let out = tmp_dir("ovr");
    let status = hb()
        .args(["balance", "--config"])
        .arg(fixture("polystable.json"))
        .args(["--k", "4", "--tol", "1e-7", "--quad", "20:40", "--ell", "1/2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["k"], serde_json::json!(4));
    assert_eq!(report["config"]["ell"], serde_json::json!("1/2"));
    assert_eq!(report["config"]["tol"], serde_json::json!(1e-7));
}

#[test]
fn asymptotics_polystable_all_checks_pass() {
    let out = tmp_dir("asympoly");
    let status = hb()
        .args(["asymptotics", "--config"])
        .arg(fixture("asymptotics_polystable.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let checks = report["result"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == serde_json::json!(true)));
    // the balanced family exists, so the trend section is populated
    assert!(report["result"]["hitchin_trend"].is_object());
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.contains("epsilon,") && csv.contains("hormander_ratio,"));
}
