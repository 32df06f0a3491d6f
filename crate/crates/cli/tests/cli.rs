use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robin_dd_cli::config::Config;
use robin_dd_cli::pipeline::{run_experiment, run_sweep, Summary, SweepAxis};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_robin-dd");

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn robin_dd(root: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("ROBIN_DD_OUTPUT_ROOT", root)
        .output()
        .expect("spawn robin-dd")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn with_dir(cfg_path: &Path, dir: &Path) -> Config {
    let mut cfg = Config::load(cfg_path).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn data_rows(csv: &Path) -> usize {
    std::fs::read_to_string(csv).unwrap().lines().skip(1).filter(|l| !l.is_empty()).count()
}

#[test]
fn linear_run_exits_zero_and_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("linear_1d.toml");
    let out = robin_dd(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/linear_1d");
    for f in ["history.csv", "history.json", "summary.json", "mesh.txt"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let text = stdout(&out);
    for cert in ["contraction: PASS", "monotone_pairing: PASS", "transmission: PASS"] {
        assert!(text.contains(cert), "{text}");
    }
    let header = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "n,gap,err_eta1,err_eta2,err_u1,err_u2,mu_err,lambda_err,newton1,newton2"
    );
}

#[test]
fn nonpositive_robin_parameter_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(bundled("linear_1d.toml"))
        .unwrap()
        .replace("s = 1.0", "s = -1.0");
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let out = robin_dd(tmp.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("must be positive"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(bundled("linear_1d.toml")).unwrap() + "\nbogus = 1\n";
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&robin_dd(tmp.path(), &["run", path.to_str().unwrap()])), 1);
    assert_eq!(code(&robin_dd(tmp.path(), &["run", "/nonexistent.toml"])), 1);
}

#[test]
fn p3_square_converges() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("plap3_square.toml");
    let out = robin_dd(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(data_rows(&tmp.path().join("out/plap3_square/history.csv")) >= 1);
}

#[test]
fn manufactured_preset_reports_discretization_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_experiment(&with_dir(&bundled("plap4_resolvent_1d.toml"), tmp.path()), tmp.path()).unwrap();
    assert_eq!(out.exit_code(), 0);
    assert!(out.summary.iterations >= 1);
    let e = out.summary.monolithic.discretization_error.unwrap();
    assert!(e > 0.0 && e < 0.1, "{e}");
}

#[test]
fn iteration_budget_exhaustion_exits_two() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(bundled("linear_1d.toml"))
        .unwrap()
        .replace("max_outer = 200", "max_outer = 2");
    let path = tmp.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let out = robin_dd(tmp.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(data_rows(&tmp.path().join("out/linear_1d/history.csv")), 2);
}

#[test]
fn sweep_over_s_writes_one_directory_per_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("linear_1d.toml");
    let out = robin_dd(
        tmp.path(),
        &["sweep", cfg.to_str().unwrap(), "--axis", "s", "--values", "0.25,1,4"],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let dir = tmp.path().join("out/linear_1d");
    for v in ["0.25", "1", "4"] {
        assert!(dir.join(format!("s_{v}/history.csv")).is_file());
    }
    let agg = std::fs::read_to_string(dir.join("sweep_s.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("value,h,exit_code,converged,iterations,final_gap"));
    assert!(rows[1].starts_with("0.25,0.03125,0,true,"));
    assert!(rows[3].starts_with("4,0.03125,0,true,"));
}

#[test]
fn sweep_over_h_reports_iterations_per_mesh() {
    let tmp = TempDir::new().unwrap();
    let cfg = with_dir(&bundled("linear_1d.toml"), tmp.path());
    let values: Vec<String> = ["16", "32", "64"].iter().map(|s| s.to_string()).collect();
    let (rows, code) = run_sweep(&cfg, tmp.path(), SweepAxis::H, &values).unwrap();
    assert_eq!(code, 0);
    let hs: Vec<f64> = rows.iter().map(|r| r.h.unwrap()).collect();
    assert_eq!(hs, vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]);
    assert!(rows.iter().all(|r| r.converged && r.iterations.unwrap() >= 1));
    assert!(tmp.path().join("sweep_h.csv").is_file());
    assert!(tmp.path().join("h_64/summary.json").is_file());
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("linear_1d.toml");
    let out = robin_dd(tmp.path(), &["sweep", cfg.to_str().unwrap(), "--axis", "s", "--values"]);
    assert_eq!(code(&out), 1);
    let out = robin_dd(tmp.path(), &["sweep", cfg.to_str().unwrap(), "--axis", "h", "--values", "abc"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = bundled("plap4_resolvent_1d.toml");
    for t in [&a, &b] {
        assert_eq!(code(&robin_dd(t.path(), &["run", cfg.to_str().unwrap()])), 0);
    }
    for f in ["history.csv", "history.json", "summary.json"] {
        let x = std::fs::read(a.path().join("out/plap4_resolvent_1d").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out/plap4_resolvent_1d").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn random_start_is_reproducible_from_seed() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = with_dir(&bundled("linear_1d.toml"), tmp.path());
    cfg.method.eta0 = robin_dd_cli::config::Eta0::Random;
    cfg.method.seed = 7;
    let x = run_experiment(&cfg, &tmp.path().join("a")).unwrap();
    let y = run_experiment(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(x.summary.history, y.summary.history);
    cfg.method.seed = 8;
    let z = run_experiment(&cfg, &tmp.path().join("c")).unwrap();
    assert_ne!(x.summary.history.initial, z.summary.history.initial);
}

#[test]
fn certify_reproduces_stored_verdicts() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("linear_1d.toml");
    assert_eq!(code(&robin_dd(tmp.path(), &["run", cfg.to_str().unwrap()])), 0);
    let dir = tmp.path().join("out/linear_1d");
    let (csv, summary) = (dir.join("history.csv"), dir.join("summary.json"));
    let out = robin_dd(tmp.path(), &["certify", csv.to_str().unwrap(), summary.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("stored verdicts reproduced"));

    // A history whose gap is not decreasing toward the reference fails.
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let mut cols: Vec<String> = lines[last].split(',').map(String::from).collect();
    cols[6] = "1.0".into();
    lines[last] = cols.join(",");
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let out = robin_dd(tmp.path(), &["certify", csv.to_str().unwrap(), summary.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));

    let parsed: Summary = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    assert!(parsed.certificates.iter().all(|c| c.passed));
}

#[test]
fn output_root_variable_relocates_relative_dirs() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("linear_1d.toml");
    let root = tmp.path().join("elsewhere");
    let out = robin_dd(&root, &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(root.join("out/linear_1d/summary.json").is_file());
    assert!(stdout(&out).contains(root.to_str().unwrap()));
}
