use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qslit");
const SCHEMA: &str = include_str!("../schema/report.schema.json");

fn qslit(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qslit(&args)
}

fn validate_against_schema(report: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn list_scenarios_prints_all_five() {
    let out = qslit(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["A", "B", "C", "D", "E"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{id} "))), "{text}");
    }
}

#[test]
fn validate_reports_field_for_nonpositive_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"scenario":"A","geometry":{"stage1":{"centers":[-5,5],"sigma":-1,"distance":100}}}"#,
    );
    let out = qslit(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("geometry.stage1.sigma"), "{err}");

    let good = write_config(dir.path(), "good.json", r#"{"scenario":"D"}"#);
    assert_eq!(qslit(&["validate", "--config", &good]).status.code(), Some(0));
}

#[test]
fn malformed_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("syntax.json", "{\"scenario\": \"A\",\n  \"alpha1\": [1, }"),
        ("unknown.json", r#"{"scenario":"A","colour":"red"}"#),
        ("probes.json", r#"{"scenario":"C"}"#),
    ] {
        let cfg = write_config(dir.path(), name, text);
        let out = run_into(&cfg, &dir.path().join("out"), &[]);
        assert_eq!(out.status.code(), Some(1), "{name}");
    }
    let missing = dir.path().join("absent.json");
    assert_eq!(qslit(&["validate", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn impossible_postselection_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "vac.json",
        r#"{"scenario":"B","alpha1":[0,0],"probes":[{"atom":"A2","cavity":"C1"}]}"#,
    );
    let out = run_into(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_d_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", r#"{"scenario":"D"}"#);
    let out_dir = dir.path().join("r");
    let out = run_into(&cfg, &out_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let vis = report["visibility"].as_f64().unwrap();
    assert!(vis < 1e-12, "{vis}");
    validate_against_schema(&report);
    let mut broken = report.clone();
    broken["derived"]["p_b1"] = serde_json::json!(1.5);
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    assert!(!jsonschema::validator_for(&schema).unwrap().is_valid(&broken));

    let mut rdr = csv::Reader::from_path(out_dir.join("density.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x", "raw_density", "normalized_density"]);
    let mut last = f64::NEG_INFINITY;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let vals: Vec<f64> = rec.iter().map(|v| v.parse().unwrap()).collect();
        assert!(vals.iter().all(|v| v.is_finite()));
        assert!(vals[0] > last);
        assert!(vals[1] >= 0.0 && vals[2] >= 0.0);
        last = vals[0];
        rows += 1;
    }
    assert_eq!(rows, 2048);
    let log = fs::read_to_string(out_dir.join("steps.log")).unwrap();
    assert!(log.contains("A1 crosses C2"));
}

#[test]
fn reports_validate_for_every_scenario_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    for (id, extra) in [
        ("A", ""),
        ("B", r#","probes":[{"atom":"A2","cavity":"C1"}]"#),
        ("C", r#","probes":[{"atom":"A2","cavity":"C1"},{"atom":"A3","cavity":"C2"}]"#),
        ("D", ""),
        ("E", ""),
    ] {
        let cfg = write_config(
            dir.path(),
            &format!("{id}.json"),
            &format!(r#"{{"scenario":"{id}","truncation":16,"tail_tol":1e-4{extra}}}"#),
        );
        let out_dir = dir.path().join(id);
        let out = run_into(&cfg, &out_dir, &["--oracle"]);
        assert_eq!(out.status.code(), Some(0), "{id}: {}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
        assert!(!text.contains("NaN") && !text.contains("inf"));
        let report: Value = serde_json::from_str(&text).unwrap();
        assert!(report["residuals"]["max_residual"].as_f64().unwrap() < 1e-10);
        validate_against_schema(&report);
    }
}

#[test]
fn same_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"scenario":"C","probes":[{"atom":"A2","cavity":"C1"},{"atom":"A3","cavity":"C2"}],
            "measurements":[{"atom":"A2","mode":"sample"},{"atom":"A3","mode":"sample"}]}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&cfg, &a, &["--seed", "42"]).status.success());
    assert!(run_into(&cfg, &b, &["--seed", "42"]).status.success());
    for file in ["report.json", "density.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 42);
}

#[test]
fn report_keys_are_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", r#"{"scenario":"A"}"#);
    let out_dir = dir.path().join("r");
    assert!(run_into(&cfg, &out_dir, &[]).status.success());
    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    let top = ["\"config\":", "\"derived\":", "\"description\":", "\"distributions\":", "\"format_version\":"];
    let positions: Vec<usize> = top.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
    assert!(text.contains("\"phi\":3.1415926535897931e0"));
}
