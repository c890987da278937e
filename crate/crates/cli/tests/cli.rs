use std::path::Path;
use std::process::{Command, Output};

const REFERENCE: &str = include_str!("../paper4.cfg");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridavg"))
        .args(args)
        .current_dir(dir)
        .env_remove("HYBRIDAVG_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

#[test]
fn simulate_writes_named_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), REFERENCE);
    let o = run(
        dir.path(),
        &["simulate", "--config", &cfg, "--epsilon", "1", "--seed", "42"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("traj_eps1_s42.csv");
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("t,x,n,event\n"));
    let rows = read_rows(&file);
    let ts: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[1] >= w[0]));
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
    assert_eq!(&rows[0][2], "30");
}

#[test]
fn simulate_averaged_reconstructs_fast_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["simulate", "--epsilon", "0", "--seed", "7", "--t-end", "5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("traj_eps0_s7.csv"));
    // x = x*_n on every row; x*_30 for the reference parameters
    let first: f64 = rows[0][1].parse().unwrap();
    assert!((first - 0.413_861_725_581_728_7).abs() < 1e-9);
    for r in &rows {
        let n: f64 = r[2].parse().unwrap();
        let x: f64 = r[1].parse().unwrap();
        let u = 0.75 * n - 6.0;
        assert!((x - 0.5 * ((u * u + 28.0).sqrt() - u)).abs() < 1e-9);
    }
}

#[test]
fn repeated_seeds_give_one_file_each_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--epsilon",
        "0.5",
        "--seed",
        "1",
        "--seed",
        "2",
        "--t-end",
        "5",
    ];
    assert!(run(dir.path(), &args).status.success());
    let a1 = std::fs::read(dir.path().join("traj_eps0.5_s1.csv")).unwrap();
    let a2 = std::fs::read(dir.path().join("traj_eps0.5_s2.csv")).unwrap();
    assert_ne!(a1, a2);
    assert!(run(dir.path(), &args).status.success());
    assert_eq!(a1, std::fs::read(dir.path().join("traj_eps0.5_s1.csv")).unwrap());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hybridavg"))
        .args(["simulate", "--epsilon", "0", "--t-end", "2"])
        .current_dir(dir.path())
        .env("HYBRIDAVG_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("traj_eps0_s99.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_hybridavg"))
        .args(["simulate", "--epsilon", "0"])
        .current_dir(dir.path())
        .env("HYBRIDAVG_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_model_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &REFERENCE.replace("x_in = 7", ""));
    let o = run(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.x_in"), "{}", stderr(&o));
}

#[test]
fn invalid_values_and_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = REFERENCE.replace("D = 0.1", "D = 0");
    let line = text.lines().position(|l| l.starts_with("D = ")).unwrap() + 1;
    let cfg = write_config(dir.path(), &text);
    let o = run(dir.path(), &["compare", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&format!("line {line}: model.D")), "{}", stderr(&o));
    let cfg = write_config(dir.path(), &REFERENCE.replace("i_max = 100000", "i_max = 3"));
    assert_eq!(run(dir.path(), &["absorb", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["simulate", "--epsilon", "1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["simulate", "--epsilon", "-1"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["compare", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["compare", "--seed", "1", "--seed", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["simulate", "--config", "/nonexistent.cfg"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let o = run(
        dir.path(),
        &["simulate", "--epsilon", "0", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn compare_prints_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["compare", "--reps", "40", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["epsilon", "1", "0.5", "0.1", "0"]);
    assert!(lines.next().unwrap().starts_with("mean n(20)"));
    assert!(text.contains("gap to the averaged model"));

    let rows = read_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[1] == "40"));
    let summary = std::fs::read(dir.path().join("summary.csv")).unwrap();
    let o = run(
        dir.path(),
        &["compare", "--reps", "40", "--seed", "3", "--workers", "2"],
    );
    assert!(o.status.success());
    assert_eq!(summary, std::fs::read(dir.path().join("summary.csv")).unwrap());
}

#[test]
fn compare_single_epsilon_has_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["compare", "--epsilon", "0", "--reps", "30"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap().split_whitespace().count(), 2);
    assert!(!text.contains("gap"));
}

#[test]
fn absorption_time_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &REFERENCE.replace("observable = \"state\"", "observable = \"absorption\""),
    );
    let o = run(
        dir.path(),
        &[
            "compare",
            "--config",
            &cfg,
            "--epsilon",
            "0",
            "--reps",
            "50",
            "--seed",
            "5",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean t_abs"));
}

#[test]
fn absorb_reports_certain_absorption() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["absorb", "--m", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("summary_absorption.csv"));
    assert_eq!(&rows[0][1], "1");
    let t: f64 = rows[0][2].parse().unwrap();
    assert!((260.0..320.0).contains(&t));
    assert_eq!(&rows[0][3], "diverges");
}

#[test]
fn absorb_oracle_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["absorb", "--m", "1", "--m", "0", "--oracle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("summary_absorption.csv"));
    let series: f64 = rows[0][2].parse().unwrap();
    let oracle: f64 = rows[0][8].parse().unwrap();
    assert!((series - oracle).abs() / oracle < 1e-6);
    assert_eq!((&rows[1][1], &rows[1][2]), ("1", "0"));
    assert!(!stdout(&o).contains("warning"));
}

#[test]
fn strict_flag_turns_undetermined_into_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &REFERENCE.replace("i_max = 100000", "i_max = 25"));
    let lax = run(dir.path(), &["absorb", "--config", &cfg, "--m", "2"]);
    assert_eq!(lax.status.code(), Some(0));
    assert!(stdout(&lax).contains("warning"));
    let strict = run(dir.path(), &["absorb", "--config", &cfg, "--m", "2", "--strict"]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn averaged_mean_over_full_replication_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["compare", "--epsilon", "0", "--reps", "10000", "--seed", "11"],
    );
    assert!(o.status.success());
    let rows = read_rows(&dir.path().join("summary.csv"));
    let mean: f64 = rows[0][2].parse().unwrap();
    assert!((13.2..=15.3).contains(&mean), "mean {mean}");
}
