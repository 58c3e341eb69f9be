use std::path::Path;
use std::process::{Command, Output};

fn wasep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasep")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn only_selects_a_single_claim() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wasep(&["claims", "--only", "remarkable-identity", "--n", "8,32", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_str(&read(dir.path(), "claims.json")).unwrap();
    let reports = json.as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["id"], "remarkable-identity");
    assert_eq!(reports[0]["pass"], true);
    for key in ["anchor", "constants", "per_n"] {
        assert!(reports[0].get(key).is_some(), "missing {key}");
    }
    let per_n = reports[0]["per_n"].as_array().unwrap();
    assert_eq!(per_n.iter().map(|r| r["n"].as_u64().unwrap()).collect::<Vec<_>>(), vec![8, 32]);
}

#[test]
fn oracle_exit_code_follows_the_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wasep(&["oracle", "--n", "4", "--t", "0.1", "--replicas", "100000", "--seed", "7", "--out", out]);
    let text = stdout(&o);
    assert!(text.contains("state") && text.contains("\tz"));
    // 8 states and 4 xi sites; z is the last column of both tables.
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("4\t")).collect();
    assert_eq!(rows.len(), 12, "{text}");
    let worst = rows
        .iter()
        .map(|l| l.rsplit('\t').next().unwrap().parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    assert_eq!(code(&o), if worst <= 3.0 { 0 } else { 1 }, "{text}");
}

#[test]
fn simulate_requires_the_physical_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wasep(&["simulate", "--n", "8", "--e-field", "1", "--beta", "0.7", "--t-max", "0.1", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    assert!(!dir.path().join("snapshots.csv").exists());
}

#[test]
fn simulate_writes_snapshots_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "simulate", "--n", "8", "--e-field", "1", "--alpha", "0.3", "--beta", "0.7", "--t", "0.05", "--obs-times",
        "0.01,0.05", "--replicas", "2", "--out", out,
    ];
    assert_eq!(code(&wasep(&args)), 0);
    let snaps = read(dir.path(), "snapshots.csv");
    assert_eq!(snaps.lines().next(), Some("n,replica,time,site,eta,current"));
    // 2 replicas x 2 times x 8 bonds.
    assert_eq!(snaps.lines().count(), 1 + 2 * 2 * 8);
    let events = read(dir.path(), "events.csv");
    assert!(events.lines().count() > 1);
    let first = read(dir.path(), "snapshots.csv");
    assert_eq!(code(&wasep(&args)), 0);
    assert_eq!(first, read(dir.path(), "snapshots.csv"));
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&wasep(&["claims", "--alpha", "1.5", "--out", out])), 2);
    assert_eq!(code(&wasep(&["claims", "--e-field", "0", "--out", out])), 2);
    assert_eq!(code(&wasep(&["claims", "--only", "no-such-claim", "--out", out])), 2);
    assert_eq!(code(&wasep(&["claims", "--bogus-flag", "1"])), 2);
    assert_eq!(code(&wasep(&["fluct", "--replicas", "10", "--out", out])), 2);
}

#[test]
fn unwritable_output_directory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let bad = file.join("sub");
    let o = wasep(&["claims", "--only", "remarkable-identity", "--n", "8", "--out", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn a_failing_claim_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wasep(&["kernel", "--n", "8,16", "--t", "0.5", "--tolerance", "kernel-bound=1e-12", "--out", out]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL kernel-bound"));
    assert!(read(dir.path(), "claims.json").contains("\"pass\": false"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!("# flat config\nn = 8, 16\nclaims = remarkable-identity\nseed = 5\nout_dir = {}\n", out.display()),
    )
    .unwrap();
    let o = wasep(&["claims", "--config", cfg.to_str().unwrap(), "--n", "8"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let json = read(&out, "claims.json");
    assert!(json.contains("\"n\": 8") && !json.contains("\"n\": 16"));
}

#[test]
fn identical_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = wasep(&["identities", "--seed", "11", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"claims.json".to_string()) && names.contains(&"claims.csv".to_string()));
    for name in &names {
        if name == "metadata.txt" {
            let meta = read(a.path(), name);
            assert_eq!(meta.lines().count(), 1);
            assert!(meta.starts_with("# wasep identities"));
            continue;
        }
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn every_table_has_a_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = wasep(&["kernel", "--n", "8,16", "--t", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let script = read(dir.path(), "plot_kernel.py");
    assert!(script.contains("\"kernel.csv\""));
    assert!(read(dir.path(), "kernel.csv").starts_with("n,order,t,"));
}
