use std::path::Path;
use std::process::{Command, Output};

use iblab::harness::RunConfig;
use serde_json::Value;

fn iblab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iblab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn report(dir: &Path, id: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(id).join("report.json")).unwrap())
        .unwrap()
}

#[test]
fn list_is_stable_and_names_every_experiment() {
    let a = iblab(&["list"]);
    assert_eq!(code(&a), 0);
    let text = stdout(&a);
    for id in [
        "E1",
        "E2",
        "E2-primal",
        "E3",
        "E4",
        "E5",
        "E6",
        "E7",
        "E8",
        "E9",
        "E10",
    ] {
        assert!(
            text.lines()
                .any(|l| l.split_whitespace().next() == Some(id)),
            "{id} missing"
        );
    }
    assert_eq!(stdout(&iblab(&["list"])), text);
}

#[test]
fn run_writes_a_bundle_whose_config_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = iblab(&["run", "E1", "--seed", "7", "--out", out_dir]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(dir.path().join("E1/report.json").exists());
    assert!(dir.path().join("E1/trajectory.csv").exists());
    assert!(dir.path().join("index.json").exists());

    let r = report(dir.path(), "E1");
    assert_eq!(r["verdict"], "confirmed");
    let cfg: RunConfig = serde_json::from_value(r["config"].clone()).unwrap();
    assert_eq!(cfg.experiment, "E1");
    assert_eq!(cfg.seed, Some(7));

    // Replaying the recorded config reproduces the report bit for bit.
    let replay = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut replay_cfg = cfg.clone();
    replay_cfg.out = Some(replay.path().to_path_buf());
    std::fs::write(&cfg_path, replay_cfg.to_json()).unwrap();
    let again = iblab(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code(&again), 0);
    let mut a = r.clone();
    let mut b = report(replay.path(), "E1");
    a["config"]["out"] = Value::Null;
    b["config"]["out"] = Value::Null;
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("E1/trajectory.csv")).unwrap(),
        std::fs::read_to_string(replay.path().join("E1/trajectory.csv")).unwrap()
    );
}

#[test]
fn invalid_configuration_exits_64() {
    assert_eq!(code(&iblab(&["run", "E1", "--eta=-1"])), 64);
    assert_eq!(code(&iblab(&["run", "E99"])), 64);
    assert_eq!(code(&iblab(&["run", "E3", "--beta", "0.5"])), 64);
    assert_eq!(code(&iblab(&["run", "E1", "--budget", "lots"])), 64);
    assert_eq!(code(&iblab(&["frobnicate"])), 64);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"experiment": "E1", "overides": {"eta": 0.1}}"#).unwrap();
    assert_eq!(
        code(&iblab(&["run", "--config", path.to_str().unwrap()])),
        64
    );

    let threads = Command::new(env!("CARGO_BIN_EXE_iblab"))
        .args(["list"])
        .env("IBLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 64);
}

#[test]
fn step_size_counterexample_is_refuted_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let out = iblab(&[
        "run",
        "E5",
        "--eta",
        "0.25",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(report(dir.path(), "E5")["verdict"], "refuted-as-expected");
}

#[test]
fn corrupted_duality_map_fails_verification() {
    let out = iblab(&[
        "verify-all",
        "--filter",
        "7",
        "--fault",
        "negate-duality-map",
    ]);
    assert_ne!(code(&out), 0);
    assert!(stdout(&out).contains("[FAIL] criterion  7"));

    let dir = tempfile::tempdir().unwrap();
    let run = iblab(&[
        "run",
        "E6",
        "--fault",
        "negate-duality-map",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    assert_eq!(report(dir.path(), "E6")["verdict"], "inconclusive");
}

#[test]
fn verify_all_filter_selects_a_subset() {
    let out = iblab(&["verify-all", "--filter", "E2"]);
    let ids: Vec<String> = stdout(&out)
        .lines()
        .filter_map(|l| l.split("criterion").nth(1))
        .map(|rest| rest.split(':').next().unwrap().trim().to_string())
        .collect();
    assert_eq!(ids, ["1", "3", "4"]);
    assert_eq!(code(&iblab(&["verify-all", "--filter", "E99"])), 64);
}

#[test]
fn sweep_writes_one_index_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = iblab(&[
        "sweep",
        "E1",
        "E3",
        "--seeds",
        "0..2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for seed in 0..2 {
        let index: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("seed-{seed}/index.json"))).unwrap(),
        )
        .unwrap();
        let ids: Vec<_> = index["runs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["experiment"].as_str().unwrap())
            .collect();
        assert_eq!(ids, ["E1", "E3"]);
    }
}
