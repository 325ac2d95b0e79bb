use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn clinch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinch")).args(args).env_remove("CLINCH_GUARD_N").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn stderr_class(out: &Output) -> String {
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is a JSON error");
    err["error"]["class"].as_str().unwrap().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn worst_case_fixture_reports_exact_ratio() {
    let out = clinch(&["run", "--fixture", "prop54", "--k", "3", "--lw-opt"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["lw_mechanism"]["exact"], "3");
    assert_eq!(report["lw_optimum"]["exact"], "5");
    assert_eq!(report["lw_ratio"]["exact"], "3/5");
    assert_eq!(report["lw_ratio"]["decimal"], "0.6");
    assert!(report.get("trace").is_none() && report.get("audit").is_none());
}

#[test]
fn envy_fixture_audit_passes_and_notes_envy() {
    let out = clinch(&["run", "--fixture", "example62", "--k", "10", "--audit", "--trace"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["x_final"], serde_json::json!([0, 1]));
    assert_eq!(report["audit"]["passed"], true);
    let envy = report["audit"]["verdicts"].as_array().unwrap().iter().find(|v| v["check"] == "envy").unwrap();
    assert_eq!(envy["passed"], false);
    assert_eq!(envy["asserted"], false);
    assert_eq!(envy["witness"]["pairs"], serde_json::json!([[1, 2]]));
    assert_eq!(report["trace"][0]["event"], "price_set");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let args = ["run", "--fixture", "prop54", "--k", "6", "--trace", "--audit", "--lw-opt", "--seed", "3"];
    assert_eq!(clinch(&args).stdout, clinch(&args).stdout);
}

#[test]
fn sweep_rows_follow_the_ratio_curve() {
    let out = clinch(&["sweep", "--fixture", "prop54", "--k-min", "2", "--k-max", "10", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0]["ratio"]["exact"], "2/3");
    assert_eq!(rows[8]["ratio"]["exact"], "10/19");
    assert!(rows.iter().all(|r| r["matches"] == true));
}

#[test]
fn sweep_rejects_degenerate_k_and_oversized_ranges() {
    let low = clinch(&["sweep", "--k-min", "1", "--k-max", "3"]);
    assert_eq!(low.status.code(), Some(4));
    let high = clinch(&["sweep", "--k-min", "2", "--k-max", "2000000"]);
    assert_eq!(high.status.code(), Some(5));
    assert_eq!(stderr_class(&high), "guard");
}

#[test]
fn generate_is_reproducible_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = clinch(&["generate", "multi_unit", "--n", "3", "--supply", "4", "--exact-supply", "--seed", "7", "--out", path(p)]);
        assert_eq!(out.status.code(), Some(0));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let doc: Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(doc["constraint"]["supply"], 4);
    assert_eq!(clinch(&["run", path(&a)]).status.code(), Some(0));
}

#[test]
fn generated_bipartite_passes_the_welfare_suite() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bip.json");
    let out = clinch(&["generate", "bipartite", "--n", "4", "--goods", "3", "--seed", "1", "--out", path(&file)]);
    assert_eq!(out.status.code(), Some(0));
    let check = clinch(&["check", path(&file), "--suite", "welfare"]);
    assert_eq!(check.status.code(), Some(0));
    let report = json(&check);
    assert_eq!(report["passed"], true);
    assert!(report["verdicts"].as_array().unwrap().iter().any(|v| v["clause"] == "half_approximation"));
}

#[test]
fn check_all_suites_on_fixture() {
    for suite in ["ic", "po", "tight", "trading", "welfare", "all"] {
        let out = clinch(&["check", "--fixture", "prop54", "--k", "3", "--suite", suite, "--trials", "20"]);
        assert_eq!(out.status.code(), Some(0), "suite {suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn corrupted_report_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let good = clinch(&["run", "--fixture", "prop54", "--k", "3", "--trace"]);
    let mut report = json(&good);
    // hand one unit back: the trace no longer explains the allocation
    report["x_final"] = serde_json::json!([0, 2]);
    let file = dir.path().join("corrupt.json");
    std::fs::write(&file, serde_json::to_string(&report).unwrap()).unwrap();

    let out = clinch(&["check", "--fixture", "prop54", "--k", "3", "--report", path(&file), "--suite", "tight"]);
    assert_eq!(out.status.code(), Some(6));
    let check = json(&out);
    assert_eq!(check["passed"], false);
    let failed: Vec<&Value> = check["verdicts"].as_array().unwrap().iter().filter(|v| v["passed"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|v| v.get("witness").is_some()));

    // the untouched report passes
    let clean = dir.path().join("clean.json");
    std::fs::write(&clean, &good.stdout).unwrap();
    let ok = clinch(&["check", "--fixture", "prop54", "--k", "3", "--report", path(&clean), "--suite", "tight"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn report_without_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("r.json");
    std::fs::write(&file, clinch(&["run", "--fixture", "prop54"]).stdout).unwrap();
    let out = clinch(&["check", "--fixture", "prop54", "--report", path(&file)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let malformed = dir.path().join("bad.json");
    std::fs::write(&malformed, "{\"buyers\": [").unwrap();
    let out = clinch(&["run", path(&malformed)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_class(&out), "parse");

    // a lone buyer violates the competition requirement
    let invalid = dir.path().join("invalid.json");
    std::fs::write(
        &invalid,
        r#"{"buyers":[{"id":1,"valuation":"2","budget":"3"}],"constraint":{"type":"multi_unit","supply":2}}"#,
    )
    .unwrap();
    assert_eq!(clinch(&["run", path(&invalid)]).status.code(), Some(4));

    let three = dir.path().join("three.json");
    clinch(&["generate", "multi_unit", "--n", "3", "--seed", "1", "--out", path(&three)]);
    let guarded = Command::new(env!("CARGO_BIN_EXE_clinch")).args(["run", path(&three)]).env("CLINCH_GUARD_N", "2").output().unwrap();
    assert_eq!(guarded.status.code(), Some(5));

    assert_eq!(clinch(&["generate", "nonsense", "--n", "3"]).status.code(), Some(2));
    assert_eq!(clinch(&["run"]).status.code(), Some(2));
    assert_eq!(clinch(&["run", "--fixture", "nope"]).status.code(), Some(4));
}

#[test]
fn lw_opt_lists_virtual_buyers() {
    let out = clinch(&["lw-opt", "--fixture", "prop54", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["lw_value"], "5");
    assert_eq!(report["virtual_buyers"].as_array().unwrap().len(), 4);
    assert_eq!(report["x_star"], serde_json::json!([2, 1]));
}

#[test]
fn table_format_is_plain_text() {
    let out = clinch(&["run", "--fixture", "prop54", "--k", "3", "--lw-opt", "--format", "table"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("LW^M/LW^OPT    3/5"));
}
