use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prefrank"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.env("RUST_LOG", "off").output().expect("spawn prefrank")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_reference_configuration() {
    let o = run(bin().args(["plan", "--targets", "27", "--budget", "24960", "--json"]));
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["max_comparisons"], 240);
    assert_eq!(v["bounds"]["lower"], 60);
    assert_eq!(v["bounds"]["upper"], 104);
    assert!((v["epsilon"].as_f64().unwrap() - 0.0877).abs() < 5e-4);
    assert!(o.stderr.is_empty());
}

#[test]
fn plan_warns_when_worst_case_exceeds_budget() {
    let o = run(bin().args([
        "plan",
        "--targets",
        "27",
        "--budget",
        "20000",
        "--epsilon",
        "0.0877",
    ]));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr)
        .contains("warning: worst case 24960 exceeds budget 20000"));
}

#[test]
fn errors_are_one_line_with_failure_status() {
    let o = run(bin().args(["plan", "--targets", "27", "--budget", "10"]));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));

    let o = run(bin().args([
        "analyze",
        "--config",
        "/nonexistent.toml",
        "/nonexistent.jsonl",
    ]));
    assert!(!o.status.success());
}

#[test]
fn simulate_analyze_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(bin()
        .args(["simulate"])
        .arg(scenario("demo.toml"))
        .args(["--format", "json", "--out-dir"])
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sim["converged"], true);
    let log = out.join("events.jsonl");
    assert!(out.join("report.json").exists());

    // the analyzer recomputes the same table from the log alone
    let o = run(bin()
        .args(["analyze", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&log)
        .args(["--format", "json"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["order"], sim["order"]);
    assert_eq!(report["rows"], sim["rows"]);
    assert_eq!(
        report["summary"]["refinement_submissions"],
        sim["refinement_submissions"]
    );

    let o = run(bin()
        .args(["analyze", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&log));
    let table = stdout(&o);
    assert!(table.starts_with("order (worst to best): "));
    assert!(table.contains("95% CI"));

    let o = run(bin()
        .args(["analyze", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&log)
        .args(["--format", "csv"]));
    let csv = stdout(&o);
    assert!(csv.starts_with("pair,left,right,wins,received"));
    assert_eq!(
        csv.lines().count(),
        sim["rows"].as_array().unwrap().len() + 1
    );

    // canonical export of a complete log is the log itself
    let o = run(bin()
        .args(["export", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&log));
    assert!(o.status.success());
    assert_eq!(o.stdout, std::fs::read(&log).unwrap());

    // a log cut after a Submit gets its derived tail back
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = lines
        .iter()
        .position(|l| l.contains("\"kind\":\"Determine\""))
        .unwrap();
    let truncated = dir.path().join("truncated.jsonl");
    std::fs::write(&truncated, lines[..cut].join("\n") + "\n").unwrap();
    let o = run(bin()
        .args(["export", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&truncated));
    let restored = stdout(&o);
    assert_eq!(restored.lines().count(), cut + 1);
    assert_eq!(restored.lines().last().unwrap(), lines[cut]);

    let snap = dir.path().join("snap.json");
    let o = run(bin()
        .args(["export", "--snapshot", "--config"])
        .arg(scenario("demo.toml"))
        .arg(&log)
        .arg("--out")
        .arg(&snap));
    assert!(o.status.success());
    let engine: prefrank_core::Engine =
        serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    assert_eq!(
        engine.current_order().ids,
        serde_json::from_value::<Vec<String>>(sim["order"].clone()).unwrap()
    );
}

#[test]
fn reference_scenario_parses() {
    let config = prefrank::ExperimentConfig::load(&scenario("reference.toml")).unwrap();
    assert_eq!(config.targets.len(), 27);
    let (setup, _) = config.sim_setup().unwrap();
    assert_eq!(setup.budget, 24960);
    assert!(config.media_root.ends_with("scenarios/media"));
}
