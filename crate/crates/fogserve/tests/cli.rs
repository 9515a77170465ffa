use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fogserve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogserve")).current_dir(dir).args(args).output().expect("spawn fogserve")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fogserve(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) {
    ok(dir, &["gen-rmat", "--vertices", "2000", "--density", "0.004", "--seed", "7", "--out", "g"]);
    fs::write(dir.join("s.toml"), "preset = \"heterogeneous\"\npreset_seed = 1\n").unwrap();
}

#[test]
fn run_writes_one_row_per_strategy_and_seed_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let args = ["run", "--graph", "g", "--scenario", "s.toml", "--seeds", "0..10", "--out"];
    ok(d, &[&args[..], &["a"]].concat());
    ok(d, &[&args[..], &["b"]].concat());
    let a = fs::read(d.join("a/results.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/results.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("strategy,seed,t_colle_ms,t_exec_ms,e2e_ms,throughput,flip_rate"));
    assert_eq!(lines.count(), 40);
}

#[test]
fn plan_profile_pack_and_trace_produce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["profile", "--graph", "g", "--scenario", "s.toml", "--out", "p.toml"]);
    ok(d, &["plan", "--graph", "g", "--cluster", "s.toml", "--profiles", "p.toml", "--out", "plan.json", "--placement", "pl.txt"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("plan.json")).unwrap()).unwrap();
    assert_eq!(report["fogs"].as_array().unwrap().len(), 6);
    assert_eq!(fs::read_to_string(d.join("pl.txt")).unwrap().lines().count(), 2000);
    let summary: serde_json::Value =
        serde_json::from_str(&ok(d, &["pack", "--graph", "g", "--quant-bits", "32,16,8,8", "--out", "g.bin"])).unwrap();
    assert_eq!(summary["stream_bytes"].as_u64().unwrap(), fs::metadata(d.join("g.bin")).unwrap().len());
    assert_eq!(summary["bits"], serde_json::json!([32, 16, 8, 8]));
    ok(d, &["trace", "--graph", "g", "--scenario", "s.toml", "--out", "t", "--plots"]);
    for f in ["scheduler_log.csv", "trajectory.csv", "trajectory.svg"] {
        assert!(d.join("t").join(f).is_file(), "{f}");
    }
}

#[test]
fn missing_scenario_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let out = fogserve(d, &["run", "--graph", "g", "--scenario", "missing.toml", "--out", "r"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario not found"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    for args in [
        &["run", "--graph", "g", "--scenario", "s.toml", "--out", "r", "--strategies", "teleport"][..],
        &["run", "--graph", "g", "--scenario", "s.toml", "--out", "r", "--seeds", "5..5"],
        &["pack", "--graph", "g", "--quant-bits", "8,16,32,64", "--out", "x"],
        &["verify", "--criteria", "11"],
    ] {
        assert!(!fogserve(d, args).status.success(), "{args:?}");
    }
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["verify", "--quick"]);
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 5, "{out}");
    assert!(!out.contains("FAIL"), "{out}");
}
