use std::fs;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .env("SIM_THREADS", "2")
        .output()
        .expect("sim runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_prints_shipped_scenarios() {
    let o = sim(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 6);
    assert!(text.contains("two_clusters_quadratic"));
    assert!(text.contains("viscosity_sweep"));
}

#[test]
fn list_of_empty_and_malformed_directories_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let o = sim(&["list", "--dir", dir]);
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    let o = sim(&["list", "--dir", dir]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("[invalid]"));
}

#[test]
fn run_by_name_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(sim(&["run", "two_clusters_quadratic", "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(sim(&["run", "two_clusters_quadratic", "--out", b.to_str().unwrap()])
        .status
        .success());
    for f in ["trajectory.csv", "diagnostics.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(sim(&["run", "smoothed_norm_cloud", "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(sim(&[
        "run",
        "smoothed_norm_cloud",
        "--seed",
        "99",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(b.join("trajectory.csv")).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 99);
}

#[test]
fn metrics_between_two_files() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.csv");
    fs::write(&a, r#"{"dim": 1, "points": [[0.0]], "weights": [1.0]}"#).unwrap();
    fs::write(&b, "x0,weight\n0.5,1.0\n").unwrap();
    let o = sim(&["metrics", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["flat_metric"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((v["w2"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn validate_kernel_reports_properties() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.json");
    fs::write(&good, r#"{"name": "smoothed_norm", "params": {"eps": 0.5}, "dim": 2}"#).unwrap();
    let o = sim(&[
        "validate-kernel",
        good.to_str().unwrap(),
        "--samples",
        "200",
        "--strict",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, r#"{"name": "nope", "dim": 1}"#).unwrap();
    assert_eq!(
        sim(&["validate-kernel", unknown.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn exit_codes_follow_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        "{\n  \"name\": \"x\",\n  \"mode\": \"metrics\",\n  \"extra\": 1\n}",
    )
    .unwrap();
    let o = sim(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    let missing = tmp.path().join("missing.json");
    assert_eq!(sim(&["run", missing.to_str().unwrap()]).status.code(), Some(3));

    let steep = tmp.path().join("steep.json");
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/scenarios/stability_sweep.json"
    ))
    .unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["stability"]["velocity"]["amplitude"] = serde_json::Value::from(-3.0);
    fs::write(&steep, v.to_string()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        sim(&["run", steep.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
