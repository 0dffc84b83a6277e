use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn slicenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slicenet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn slicenet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The baseline preset shortened to `seconds`.
fn short_config(dir: &Path, seconds: f64) -> String {
    let toml = stdout(&slicenet(&["presets", "show", "paper-baseline"]));
    let edited = toml.replace("duration_s = 60.0", &format!("duration_s = {seconds:?}"));
    assert_ne!(edited, toml);
    let path = dir.join("short.toml");
    fs::write(&path, edited).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn presets_list_and_show() {
    let o = slicenet(&["presets", "list"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().collect::<Vec<_>>(), vec!["paper-baseline", "paper-sliced"]);

    let o = slicenet(&["presets", "show", "paper-sliced"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("mode = \"sliced\""));
    assert!(text.contains("kind = \"relocate_ue\""));

    let o = slicenet(&["presets", "show", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 3.0);
    let out = dir.path().join("report.json");
    let csv = dir.path().join("csv");
    let o = slicenet(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["simulated_s"], 3.0);
    assert_eq!(report["audit"].as_array().unwrap().len(), 0);
    let throughput = fs::read_to_string(csv.join("throughput.csv")).unwrap();
    assert!(throughput.lines().count() > 30);
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nduration_s = -1\n").unwrap();
    let o = slicenet(&["run", "--config", bad.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));

    let o = slicenet(&["run", "--config", "missing.toml", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));

    let o = slicenet(&["run", "--config", "preset:unknown", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_prints_headline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 2.0);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert!(slicenet(&["run", "--config", &cfg, "--out", p.to_str().unwrap()]).status.success());
    }
    let o = slicenet(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let cmp: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cmp["headline"]["stall_delta"], 0);
    assert_eq!(cmp["headline"]["rtt_within_tolerance"], true);
    assert!(cmp["metrics"].as_array().unwrap().iter().all(|m| m["delta"] == 0.0));
}

#[test]
fn served_session_replays_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 2.0);
    let live = dir.path().join("live.json");
    let log = dir.path().join("commands.json");
    let o = slicenet(&[
        "serve",
        "--config",
        &cfg,
        "--listen",
        "127.0.0.1:0",
        "--pace",
        "50",
        "--autostart",
        "--exit-on-finish",
        "--out",
        live.to_str().unwrap(),
        "--commands-out",
        log.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let replayed = dir.path().join("replayed.json");
    let o = slicenet(&[
        "replay",
        "--config",
        &cfg,
        "--commands",
        log.to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&live).unwrap(), fs::read_to_string(&replayed).unwrap());
}
