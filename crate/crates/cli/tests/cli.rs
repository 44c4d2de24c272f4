use std::path::Path;
use std::process::Command;

fn cmab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
    "learner": {"kind": "exp4dale", "eta": "auto"},
    "environment": {"kind": "planted", "contexts": 2, "actions": 2, "good": 0.1, "bad": 0.9},
    "delays": "fifo-random:7",
    "horizon": 200,
    "seeds": [1, 2]
}"#;

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = cmab()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 200);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["seeds"], serde_json::json!([1, 2]));
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = cmab()
            .env("CMAB_THREADS", threads)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("runs.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_makes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let status = cmab()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--param", "delays=fixed:0,fixed:5"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("delays=fixed_0/summary.json").exists());
    assert!(out.join("delays=fixed_5/summary.json").exists());
}

#[test]
fn check_and_lower_bound_run() {
    let o = cmab().args(["check", "--suite", "unit"]).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS] criterion  1"));

    let o = cmab()
        .args([
            "lower-bound",
            "--instance",
            "thm3",
            "--T",
            "200",
            "--seeds",
            "3",
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean regret"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &SMALL.replace("fifo-random:7", "sometimes:3"));
    let o = cmab()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!o.status.success());
    let o = cmab().args(["check", "--suite", "nope"]).output().unwrap();
    assert!(!o.status.success());
}
