use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_vista");

fn config(policy: &str, horizon: usize) -> String {
    format!(
        r#"
[objective]
name = "synthetic1d"

[network]
n = 2
n_honest = 1
delta = 1.0

[utility]
lambda = 0.1

[policy]
{policy}

[curve]
path = "curve.csv"
eta_max = 30.0
points = 32
seed = 1

[curve.solver]
samples = 10000
coarse_points = 32

[run]
w_init = [40.0]
horizon = {horizon}
runs = 4
master_seed = 12
ma_window = 5
"#
    )
}

fn write_config(dir: &Path, name: &str, policy: &str, horizon: usize) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, config(policy, horizon)).unwrap();
    path
}

fn vista(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tabulate_curve_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "kind = \"vista\"\nb0 = 0.1\nc = 1.0", 10);
    let out = dir.path().join("out/curve.csv");
    let o = vista(&["tabulate-curve", "--config", s(&cfg), "--out", s(&out), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("eta,pa,mse,r_star,pa_stderr,mse_stderr\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 33);
}

#[test]
fn run_is_reproducible_and_checkable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "kind = \"vista\"\nb0 = 0.1\nc = 1.0", 120);
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    for out in [&o1, &o2] {
        let o = vista(&["run", "--config", s(&cfg), "--out", s(out), "--dump-runs", "--strict"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["vista.csv", "vista_ma5.csv", "vista_summary.json", "vista_runs.jsonl"] {
        assert_eq!(fs::read(o1.join(name)).unwrap(), fs::read(o2.join(name)).unwrap(), "{name}");
    }
    // The curve cache was created next to the config on the first run.
    assert!(dir.path().join("curve.csv").exists());

    let csv = fs::read_to_string(o1.join("vista.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);

    let runs = o1.join("vista_runs.jsonl");
    let o = vista(&["check", "--run", s(&runs), "--strict"]);
    assert!(o.status.success());
    let verdicts: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(verdicts.as_array().unwrap().len(), 4);
    assert!(verdicts.as_array().unwrap().iter().all(|v| v["passed"] == true));

    // Shrinking a recorded step below the floor is caught.
    let text = fs::read_to_string(&runs).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[0]["rounds"][3]["b_applied"] = serde_json::json!(1e-9);
    let tampered = dir.path().join("tampered.jsonl");
    let body: Vec<String> = lines.iter().map(|v| v.to_string()).collect();
    fs::write(&tampered, body.join("\n")).unwrap();
    let o = vista(&["check", "--run", s(&tampered)]);
    assert!(o.status.success());
    let o = vista(&["check", "--run", s(&tampered), "--strict"]);
    assert_eq!(o.status.code(), Some(3));

    // Overrides from the command line change the seeds.
    let o3 = dir.path().join("o3");
    let o = vista(&["run", "--config", s(&cfg), "--out", s(&o3), "--seed", "99", "--runs", "2"]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o3.join("vista_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(summary["config"]["master_seed"], 99);
}

#[test]
fn compare_ranks_policies() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", "kind = \"vista\"\nb0 = 0.1\nc = 1.0", 60);
    let b = write_config(dir.path(), "b.toml", "kind = \"constant\"\nb0 = 0.1\neta_fixed = 20.0", 60);
    let out = dir.path().join("cmp");
    let o = vista(&["compare", "--configs", s(&a), s(&b), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,vista_mean_loss,"));
    assert!(header.contains("constant-20_mean_gradsq"));
    assert_eq!(csv.lines().count(), 61);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(json["ranking"].as_array().unwrap().len(), 2);
    assert!(out.join("constant-20.csv").exists());

    let c = write_config(dir.path(), "c.toml", "kind = \"constant\"\nb0 = 0.1\neta_fixed = 5.0", 30);
    let o = vista(&["compare", "--configs", s(&a), s(&c), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cases = [
        ("unknown_field.toml", "kind = \"vista\"\nb0 = 0.1\nc = 1.0\nbogus = 1"),
        ("bad_b0.toml", "kind = \"vista\"\nb0 = -0.1\nc = 1.0"),
        ("wrong_field.toml", "kind = \"constant\"\nb0 = 0.1\neta_fixed = 20.0\nc = 1.0"),
        ("low_eta.toml", "kind = \"constant\"\nb0 = 0.1\neta_fixed = 1.0"),
    ];
    for (name, policy) in cases {
        let cfg = write_config(dir.path(), name, policy, 10);
        let o = vista(&["run", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let missing = dir.path().join("nope.toml");
    let o = vista(&["run", "--config", s(&missing), "--out", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    let o = vista(&["run", "--config", s(&missing), "--out", s(&out), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
