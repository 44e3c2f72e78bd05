//! Command-line integration tests, including the determinism acceptance
//! criterion: two `verify-all` runs with the same seed must produce
//! byte-identical reports once the timestamp field is removed.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symred"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("symred_test_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn report_sans_timestamp(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value
        .as_object_mut()
        .unwrap()
        .remove("timestamp")
        .expect("timestamp field present");
    serde_json::to_string_pretty(&value).unwrap()
}

#[test]
fn acceptance_12_verify_all_determinism() {
    let start = Instant::now();
    let dir_a = temp_dir("det_a");
    let dir_b = temp_dir("det_b");
    for dir in [&dir_a, &dir_b] {
        let status = bin()
            .args(["verify-all", "--seed", "42", "--output"])
            .arg(dir)
            .status()
            .expect("binary runs");
        assert!(status.success(), "verify-all failed in {}", dir.display());
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(&dir_a).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let other = dir_b.join(path.file_name().unwrap());
            assert_eq!(
                report_sans_timestamp(&path),
                report_sans_timestamp(&other),
                "{} differs between runs",
                path.display()
            );
            compared += 1;
        }
    }
    assert_eq!(compared, 4, "expected one report per builtin");
    let elapsed = start.elapsed().as_secs_f64();
    let ok = elapsed < 300.0;
    println!(
        "ACCEPTANCE 12 verify-all determinism: {} ({elapsed:.1}s / budget 300s)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn run_builtin_with_standard_tasks() {
    let dir = temp_dir("run_std");
    let config = dir.join("model.json");
    std::fs::write(
        &config,
        r#"{
            "builtin": "z2_cone",
            "tasks": [{"task": "invariants"}, {"task": "strata"}, {"task": "verify"}],
            "seed": 7
        }"#,
    )
    .unwrap();
    let output = bin()
        .arg("run")
        .arg(&config)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    // Generators (u, v, w) and the cone structure matrix.
    assert_eq!(
        results[0]["generators"],
        serde_json::json!(["q1^2", "q1*p1", "p1^2"])
    );
    assert_eq!(results[0]["structure_matrix"][0][1], "2*y1");
    // Two strata.
    let classes = results[1]["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 2);
    assert_eq!(results[2]["all_pass"], serde_json::json!(true));
}

#[test]
fn empty_task_list_is_a_valid_run() {
    let dir = temp_dir("run_empty");
    let config = dir.join("model.json");
    std::fs::write(
        &config,
        r#"{"builtin": "circle_1_-1", "tasks": [], "seed": 1}"#,
    )
    .unwrap();
    let output = bin()
        .arg("run")
        .arg(&config)
        .arg("--output")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 0);
    assert_eq!(report["model"]["builtin"], "circle_1_-1");
}

#[test]
fn odd_space_dimension_is_a_config_error() {
    let dir = temp_dir("run_odd");
    let config = dir.join("model.json");
    std::fs::write(
        &config,
        r#"{"space": {"dim": 3}, "group": {"type": "torus", "weights": [[1]]},
            "hamiltonian": "q1^2", "tasks": [], "seed": 1}"#,
    )
    .unwrap();
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unparseable_config_is_a_config_error() {
    let dir = temp_dir("run_bad");
    let config = dir.join("model.json");
    std::fs::write(&config, "{not json").unwrap();
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_seed_with_sampled_task_is_a_config_error() {
    let dir = temp_dir("run_noseed");
    let config = dir.join("model.json");
    std::fs::write(
        &config,
        r#"{"builtin": "z2_cone", "tasks": [{"task": "verify"}]}"#,
    )
    .unwrap();
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn impossible_tolerance_scale_yields_verification_failure() {
    let dir = temp_dir("run_tight");
    let config = dir.join("model.json");
    std::fs::write(
        &config,
        r#"{"builtin": "z2_cone", "tasks": [{"task": "verify", "checks": ["twin_dynamics"]}],
            "seed": 7}"#,
    )
    .unwrap();
    let output = bin()
        .arg("run")
        .arg(&config)
        .arg("--output")
        .arg(&dir)
        .args(["--tolerance-scale", "1e-12"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("FAILED twin_dynamics"), "stderr: {stderr}");
}

#[test]
fn builtin_subcommand_prints_runnable_config() {
    for name in ["z2_cone", "circle_1_-1", "klein_r4", "so3_central_force"] {
        let output = bin().args(["builtin", name]).output().unwrap();
        assert!(output.status.success());
        let text = String::from_utf8(output.stdout).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["space"]["dim"].as_u64().unwrap() >= 2);
        // And the printed config itself runs (with a light task list).
        let dir = temp_dir(&format!("builtin_{name}"));
        let mut cfg: serde_json::Value = value.clone();
        cfg["tasks"] = serde_json::json!([{"task": "invariants"}]);
        let config = dir.join("model.json");
        std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
        let output = bin()
            .arg("run")
            .arg(&config)
            .arg("--output")
            .arg(&dir)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let output = bin().args(["builtin", "unknown"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
