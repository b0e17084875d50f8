use std::path::Path;
use std::process::{Command, Output};

fn pidaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pidaudit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_sim(out: &Path, retention: &str, unique_b: &str) {
    let o = pidaudit(&[
        "synth", "sim", "--n", "1500", "--retention", retention, "--unique-b", unique_b, "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn write_config(dir: &Path, dataset: &str) -> String {
    let path = dir.join(format!("{dataset}.json"));
    std::fs::write(&path, format!(r#"{{"datasets": ["{dataset}"]}}"#)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn audit_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    synth_sim(&dir.path().join("deep.pidr"), "0", "1");
    synth_sim(&dir.path().join("shallow.pidr"), "1", "0");

    let pass = pidaudit(&["audit", "--config", &write_config(dir.path(), "deep.pidr")]);
    assert_eq!(pass.status.code(), Some(0), "{}", stderr(&pass));
    let report: serde_json::Value = serde_json::from_str(&stdout(&pass)).unwrap();
    assert_eq!(report["verdict"], "pass");

    let out = dir.path().join("report.json");
    let fail = pidaudit(&[
        "audit", "--config", &write_config(dir.path(), "shallow.pidr"), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(3), "{}", stderr(&fail));
    assert!(stdout(&fail).contains("overall verdict fail"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["verdict"], "fail");
    assert!(report["config"]["out"].is_null());
}

#[test]
fn missing_dataset_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = pidaudit(&["audit", "--config", &write_config(dir.path(), "absent.pidr")]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("absent.pidr"), "{err}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"datasets": ["x.pidr"], "tua": 0.3}"#).unwrap();
    let o = pidaudit(&["audit", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));
}

#[test]
fn oracle_prints_table_and_json() {
    let o = pidaudit(&["oracle", "--gate", "xor"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("syn         1.000000"), "{}", stdout(&o));

    let o = pidaudit(&["oracle", "--gate", "copy", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["bounds"]["i_wedge"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let o = pidaudit(&["oracle", "--gate", "nand"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nand"));
}

#[test]
fn synth_then_risk_writes_one_decision_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("planted.pidr");
    let o = pidaudit(&["synth", "planted", "--n", "500", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let out = dir.path().join("decisions.ndjson");
    let o = pidaudit(&[
        "risk", "--dataset", data.to_str().unwrap(), "--tau", "0.4", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 500);
    for r in &rows {
        let abstain = r["risk_score"].as_f64().unwrap() > 0.4;
        assert_eq!(r["verdict"], if abstain { "abstain" } else { "answer" });
    }
    let summary: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(summary["n"], 500);

    let o = pidaudit(&["risk", "--dataset", data.to_str().unwrap(), "--tau", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn probe_sweep_lists_files_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pidr");
    let b = dir.path().join("b.pidr");
    synth_sim(&a, "1", "0");
    synth_sim(&b, "0", "0");
    let o = pidaudit(&["probe-sweep", "--side", "unlearned", b.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with(b.to_str().unwrap()));
    assert!(lines[2].starts_with(a.to_str().unwrap()));
}

#[test]
fn correlate_reports_fit() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/linear.csv");
    let o = pidaudit(&["correlate", fixture]);
    assert!(o.status.success());
    let text = stdout(&o);
    let (human, json) = text.split_once('\n').unwrap();
    assert!(human.starts_with("n 4"), "{human}");
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    assert!((v["pearson_r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["ols_slope"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn synth_without_out_is_an_error() {
    let o = pidaudit(&["synth", "gate", "--gate", "and"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--out"));
}
