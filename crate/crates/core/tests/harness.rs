use std::fs;

use euler_align::harness::{self, list_scenarios, run, ScenarioConfig, SHIPPED};
use serde_json::Value;

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn particle_scenario_reruns_byte_identically() {
    let cfg = harness::shipped_scenario("two_clusters_quadratic").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    run(&cfg, &tmp.path().join("a")).unwrap();
    run(&cfg, &tmp.path().join("b")).unwrap();
    let a = files(&tmp.path().join("a"));
    assert_eq!(a, files(&tmp.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["diagnostics.csv", "manifest.json", "summary.json", "trajectory.csv"]
    );
    // No temp files survive the atomic writes.
    assert!(a.iter().all(|(n, _)| !n.starts_with('.')));
}

#[test]
fn manifest_hashes_every_emitted_file() {
    let cfg = harness::shipped_scenario("metrics_demo").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary = run(&cfg, tmp.path()).unwrap();
    let m = &summary.manifest;
    assert_eq!(m["tool"], "euler-align");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    for (name, bytes) in files(tmp.path()) {
        if name == "manifest.json" {
            assert_eq!(bytes, harness::canonical_json(m).into_bytes());
        } else {
            assert_eq!(m["files"][&name], harness::sha256_hex(&bytes), "{name}");
        }
    }
    let metrics: Value = serde_json::from_slice(&fs::read(tmp.path().join("metrics.json")).unwrap()).unwrap();
    for key in ["flat_metric", "w1", "w2", "total_variation"] {
        assert!(metrics[key].is_number(), "{key}");
    }
}

#[test]
fn json_output_has_sorted_keys() {
    let cfg = harness::shipped_scenario("metrics_demo").unwrap();
    let text = harness::canonical_json(&harness::manifest(&cfg, &harness::execute(&cfg).unwrap()));
    let top: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \""))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
}

#[test]
fn resolved_config_round_trips_to_the_same_manifest() {
    for (name, _) in SHIPPED {
        let cfg = harness::shipped_scenario(name).unwrap();
        let again = ScenarioConfig::from_json(&harness::canonical_json(&cfg.resolved())).unwrap();
        assert_eq!(again.resolved(), cfg.resolved(), "{name}");
        if *name == "two_clusters_quadratic" || *name == "stability_sweep" {
            let a = harness::manifest(&cfg, &harness::execute(&cfg).unwrap());
            let b = harness::manifest(&again, &harness::execute(&again).unwrap());
            assert_eq!(a, b, "{name}");
        }
    }
}

#[test]
fn seed_changes_random_scenarios() {
    let mut cfg = harness::shipped_scenario("smoothed_norm_cloud").unwrap();
    let a = harness::manifest(&cfg, &harness::execute(&cfg).unwrap());
    cfg.seed += 1;
    let b = harness::manifest(&cfg, &harness::execute(&cfg).unwrap());
    assert_ne!(a["files"]["trajectory.csv"], b["files"]["trajectory.csv"]);
    assert_ne!(a["config_sha256"], b["config_sha256"]);
}

#[test]
fn catalogue_of_shipped_scenarios() {
    let entries = list_scenarios(None).unwrap();
    assert!(entries.len() >= 6);
    assert!(entries.iter().all(|e| e.error.is_none() && !e.description.is_empty()));
    for required in [
        "two_clusters_quadratic",
        "smoothed_norm_cloud",
        "skewed_control",
        "viscous_bump",
        "viscosity_sweep",
        "stability_sweep",
    ] {
        assert!(entries.iter().any(|e| e.name == required), "{required}");
    }
}

#[test]
fn catalogue_of_a_directory() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(list_scenarios(Some(tmp.path())).unwrap().is_empty());
    fs::write(tmp.path().join("broken.json"), "{\"name\": \"x\",\n \"mode\": ").unwrap();
    fs::write(tmp.path().join("ok.json"), SHIPPED[0].1).unwrap();
    fs::write(tmp.path().join("notes.txt"), "ignored").unwrap();
    let entries = list_scenarios(Some(tmp.path())).unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0].name, "broken");
    assert!(entries[0].error.as_deref().unwrap().contains("line 2"));
    assert_eq!(entries[1].name, SHIPPED[0].0);
    assert!(entries[1].error.is_none());
}

#[test]
fn failures_map_to_exit_classes() {
    let bad = ScenarioConfig::from_json("{\"name\": \"x\", \"mode\": \"grid\"}").unwrap_err();
    assert_eq!(bad.exit_code(), 1);

    let mut cfg = harness::shipped_scenario("two_clusters_quadratic").unwrap();
    cfg.particles.as_mut().unwrap().simulation.dt = 10.0;
    assert_eq!(harness::execute(&cfg).unwrap_err().exit_code(), 1);

    let cfg = harness::shipped_scenario("metrics_demo").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(run(&cfg, &blocker.join("out")).unwrap_err().exit_code(), 3);
}

#[test]
fn numerical_failures_carry_scenario_context() {
    let text = harness::SHIPPED
        .iter()
        .find(|(n, _)| *n == "stability_sweep")
        .unwrap()
        .1;
    let mut v: Value = serde_json::from_str(text).unwrap();
    // Steep enough that characteristics cross before t_end.
    v["stability"]["velocity"]["amplitude"] = Value::from(-3.0);
    let cfg = ScenarioConfig::from_json(&v.to_string()).unwrap();
    let err = harness::execute(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("stability_sweep"), "{err}");
}

#[test]
fn grid_functionals_stay_bounded_on_shipped_scenarios() {
    for (name, _) in SHIPPED {
        let cfg = harness::shipped_scenario(name).unwrap();
        let Some(grid) = &cfg.grid else { continue };
        assert!(grid.run.t_end <= 1.0, "{name}");
        let art = harness::execute(&cfg).unwrap();
        let summary: Value = serde_json::from_slice(art.get("summary.json").unwrap()).unwrap();
        for key in ["max_bd_ratio", "max_mv_ratio"] {
            let r = summary[key].as_f64().unwrap();
            assert!(r <= 10.0, "{name} {key} = {r}");
        }
    }
}
