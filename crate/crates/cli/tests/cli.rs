use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_safestep"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = scenarios().join("paper_scenario.toml");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--plots"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["steps.csv", "summary.json", "estimation.csv", "trajectory.svg", "barriers.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("goal_reached=true"), "{stdout}");

    let o = run(&["verify", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn verify_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = scenarios().join("paper_scenario.toml");
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let path = out.join("summary.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["steps"] = serde_json::json!(v["steps"].as_u64().unwrap() + 1);
    std::fs::write(&path, v.to_string()).unwrap();
    let o = run(&["verify", "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("steps"));
}

#[test]
fn mode_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let cfg = scenarios().join("paper_scenario.toml");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--mode", "baseline", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["inputs"]["mode"], "baseline");
    assert_eq!(v["inputs"]["seed"], 3);
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");

    let o = run(&["run", "--config", s(&tmp.path().join("missing.toml")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nname = \"x\"\nbogus_key = 1\n").unwrap();
    let o = run(&["run", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cfg = scenarios().join("paper_scenario.toml");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--mode", "teleport"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unwritable_output_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = scenarios().join("paper_scenario.toml");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&blocker.join("sub"))]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
}

#[test]
fn sweep_runs_every_match_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let pattern = format!("{}/*.toml", scenarios().display());
    let o = run(&["sweep", "--configs", &pattern, "--out", s(&out), "--jobs", "2", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let n_configs = std::fs::read_dir(scenarios())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "toml"))
        .count();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2 * n_configs);
    assert_eq!(report["failed"], 0);

    let o = run(&["verify", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("verified {} run(s)", 2 * n_configs)));
}

#[test]
fn empty_sweep_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let pattern = format!("{}/*.nothing", tmp.path().display());
    let o = run(&["sweep", "--configs", &pattern, "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("paper_scenario.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&b)]).status.success());
    for f in ["steps.csv", "summary.json", "estimation.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
