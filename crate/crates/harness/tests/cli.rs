use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn muonlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muonlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MUONLAB_OUT_ROOT")
        .output()
        .expect("spawn muonlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_RUN: &str = r#"
m = 4
n = 5
q_profile = "geometric"
q_cond = 50.0
w_star_low = -1.0
w_star_high = 1.0
optimizer = "muon"
schedule = "constant"
lr = 0.05
iters = 30
cadence = 5
"#;

#[test]
fn verify_passing_check_exits_zero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = muonlab(&["verify", "--check", "norm-lemmas", "--instances", "50"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
    assert_eq!(v["instances"], 50);
}

#[test]
fn unknown_check_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = muonlab(&["verify", "--check", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orthogonality"));
}

#[test]
fn help_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(muonlab(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(muonlab(&["run", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(muonlab(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_config_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = muonlab(&["run", "--config", "absent.toml", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn bad_config_values_leave_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in ["typo_key = 3\n", "iters = 0\n", "optimizer = \"sgd\"\n", "beta = 1.0\n"]
        .iter()
        .enumerate()
    {
        let cfg = dir.path().join(format!("bad{i}.toml"));
        fs::write(&cfg, body).unwrap();
        let o = muonlab(&["run", "--config", cfg.to_str().unwrap(), "--out", "res"], dir.path());
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!dir.path().join("res").exists(), "{body}");
    }
}

#[test]
fn diverging_grid_fails_and_cleans_up() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{SMALL_RUN}grid = [1e8]\n")).unwrap();
    let o = muonlab(&["run", "--config", "c.toml", "--out", "deep/res"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    assert!(!dir.path().join("deep").exists());
}

#[test]
fn run_writes_artifacts_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL_RUN).unwrap();
    let o = muonlab(
        &["run", "--config", "c.toml", "--out", "res", "--iters", "12", "--seed", "7", "--lr", "0.01"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    let saved = fs::read_to_string(res.join("config.toml")).unwrap();
    let cfg = muonlab_harness::ExperimentConfig::from_toml_over(&saved, muonlab_harness::Preset::Run).unwrap();
    assert_eq!((cfg.iters, cfg.seeds.clone(), cfg.lr, cfg.m), (12, vec![7], 0.01, 4));
    for f in ["records.csv", "summary.json"] {
        assert!(res.join("seed_7").join(f).is_file(), "{f}");
    }
    let records = muonlab_harness::emit::read_records(&res.join("seed_7/records.csv")).unwrap();
    let ts: Vec<usize> = records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0, 5, 10, 12]);
}

#[test]
fn out_root_env_relocates_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("elsewhere");
    fs::write(dir.path().join("c.toml"), SMALL_RUN).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_muonlab"))
        .args(["run", "--config", "c.toml", "--out", "res"])
        .current_dir(dir.path())
        .env("MUONLAB_OUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("res/seed_1/records.csv").is_file());
    assert!(!dir.path().join("res").exists());
}

#[test]
fn ratio_study_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "ratio_samples = 40\n").unwrap();
    let o = muonlab(&["ratio-study", "--config", "c.toml", "--out", "rs"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = muonlab_harness::emit::read_numeric_csv(&dir.path().join("rs/ratio_study.csv")).unwrap();
    assert_eq!(rows.len(), 40);
    let w = muonlab_harness::emit::read_numeric_csv(&dir.path().join("rs/w_stars.csv")).unwrap();
    assert_eq!(w[0].len(), 1 + 15 * 20);
}
