//! Exit codes, emitted files and JSON round-trips of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use domsplit::cli::{FamilySpec, MulticoneReport, SplittingReport};
use domsplit::example4d::Theorem3Report;
use domsplit::words::{is_dominated, DominationConfig, GapReport};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::TempDir;

fn family(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../families").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_domsplit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match std::fs::read_dir(dir) {
        Ok(entries) => entries.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

/// Load `path`, and check that re-serializing reproduces the file and re-loads equal.
fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap();
    let value: T = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&value).unwrap();
    assert_eq!(again.trim_end(), text.trim_end(), "{} does not re-serialize identically", path.display());
    let reloaded: T = serde_json::from_str(&again).unwrap();
    assert_eq!(reloaded, value);
    value
}

fn out_dir() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    (tmp, out)
}

#[test]
fn check_diagonal_is_dominated() {
    let (_tmp, out) = out_dir();
    let spec = family("diag.json");
    let o = run(&["check", spec.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out), ["gap_report.csv", "gap_report.json"]);
    let report: GapReport = round_trip(&out.join("gap_report.json"));
    let fam = FamilySpec::load(&spec).unwrap().build().unwrap();
    assert_eq!(report, is_dominated(&fam, 1, &DominationConfig::default()).unwrap());
    let csv = std::fs::read_to_string(out.join("gap_report.csv")).unwrap();
    assert!(csv.starts_with("N,max_log_ratio,words_examined,exact\n"));
    assert_eq!(csv.lines().count(), 1 + report.per_length.len());
}

#[test]
fn check_rotation_is_not_dominated() {
    let (_tmp, out) = out_dir();
    let o = run(&["check", family("rotation.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let report: GapReport = round_trip(&out.join("gap_report.json"));
    assert_eq!(report.verdict.unwrap().name(), "not_dominated");
}

#[test]
fn check_diag_rotation_pair_is_not_dominated() {
    let (_tmp, out) = out_dir();
    let o = run(&["check", family("diag_rot.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn truncated_json_fails_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    std::fs::write(&spec, r#"{"dim": 2, "matrices": [{"entries": [2, 0, "#).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["check", spec.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("line 1"), "no position in: {stderr}");
    assert!(files(&out).is_empty());
}

#[test]
fn missing_input_fails_without_writing() {
    let (tmp, out) = out_dir();
    let o = run(&["check", tmp.path().join("absent.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(files(&out).is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (_tmp, out) = out_dir();
    let o = run(&["check", "--no-such-flag"], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn error_keeps_previous_outputs_intact() {
    let (tmp, out) = out_dir();
    let o = run(&["check", family("diag.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    let before = std::fs::read(out.join("gap_report.json")).unwrap();
    let spec = tmp.path().join("bad.json");
    std::fs::write(&spec, "{").unwrap();
    assert_eq!(run(&["check", spec.to_str().unwrap()], &out).status.code(), Some(1));
    assert_eq!(std::fs::read(out.join("gap_report.json")).unwrap(), before);
    assert_eq!(files(&out), ["gap_report.csv", "gap_report.json"]);
}

#[test]
fn multicone_diagonal_has_one_component() {
    let (_tmp, out) = out_dir();
    let o = run(&["multicone", family("diag.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out), ["component_0.csv", "multicone.json"]);
    let report: MulticoneReport = round_trip(&out.join("multicone.json"));
    assert_eq!(report.multicone.component_count(), 1);
    assert!(report.multicone.invariance_margin > 0.0);
}

#[test]
fn multicone_refuses_non_dominated_family() {
    let (_tmp, out) = out_dir();
    let o = run(&["multicone", family("rotation.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(files(&out).is_empty());
}

#[test]
fn multicone_override_reports_construction_failure() {
    let (_tmp, out) = out_dir();
    let o = run(
        &["multicone", family("rotation.json").to_str().unwrap(), "--override-domination-gate"],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("overridden"));
    assert!(files(&out).is_empty());
}

#[test]
fn multicone_example4d_audits_components() {
    let (_tmp, out) = out_dir();
    let o = run(&["multicone", family("example4d.json").to_str().unwrap(), "--index", "2"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: MulticoneReport = round_trip(&out.join("multicone.json"));
    let k = report.multicone.component_count();
    assert!(k >= 1);
    // six coordinate planes of R^4 per component
    assert_eq!(report.audit.len(), 6 * k);
    assert!(report.audit.iter().all(|a| a.arc_count == a.arcs.len()));
    for c in 0..k {
        assert!(out.join(format!("component_{c}.csv")).exists());
    }
}

#[test]
fn splitting_diagonal_passes() {
    let (_tmp, out) = out_dir();
    let o = run(&["splitting", family("diag.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out), ["ratio_curve.csv", "splitting.json"]);
    let report: SplittingReport = round_trip(&out.join("splitting.json"));
    assert!(report.check.passes);
    let csv = std::fs::read_to_string(out.join("ratio_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.check.log_ratio_curve.len());
}

#[test]
fn splitting_degenerate_gap_is_an_error() {
    let (_tmp, out) = out_dir();
    let o = run(&["splitting", family("rotation.json").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ill-defined"));
    assert!(files(&out).is_empty());
}

#[test]
fn splitting_example4d_passes() {
    let (_tmp, out) = out_dir();
    let o = run(&["splitting", family("example4d.json").to_str().unwrap(), "--index", "2"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn example4d_weak_contraction_fails_the_scan() {
    let (_tmp, out) = out_dir();
    let o = run(&["example4d", "--lambda", "1.01"], &out);
    assert_eq!(o.status.code(), Some(2));
    let report: Theorem3Report = round_trip(&out.join("theorem3.json"));
    assert_eq!(report.failed_stage.as_deref(), Some("lambda_scan"));
    assert!(report.scan[0].c1.margin < 0.0 || report.scan[0].c2.margin < 0.0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("margins"));
}

#[test]
fn example4d_tiny_grid_warns_and_runs() {
    let (_tmp, out) = out_dir();
    let o = run(&["example4d", "--grid", "2"], &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(matches!(o.status.code(), Some(0 | 2 | 3)));
    assert_eq!(
        files(&out),
        ["curve_first.csv", "curve_second.csv", "surface_first.csv", "surface_second.csv", "theorem3.json"]
    );
    let _: Theorem3Report = round_trip(&out.join("theorem3.json"));
}

#[test]
fn family_spec_round_trips() {
    for name in ["diag.json", "rotation.json", "diag_rot.json", "conjugated.json", "example4d.json"] {
        let spec: FamilySpec = round_trip_value(&family(name));
        spec.build().unwrap();
    }
}

fn round_trip_value<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(path: &Path) -> T {
    let value: T = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let again: T = serde_json::from_str(&serde_json::to_string(&value).unwrap()).unwrap();
    assert_eq!(again, value);
    value
}
