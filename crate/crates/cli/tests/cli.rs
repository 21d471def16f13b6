use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use logkdv_cli::io::{read_profile, read_snapshot, read_summary};

fn logkdv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logkdv")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs[0].clone()
}

#[test]
fn print_config_shows_defaults() {
    let o = logkdv(&["wave", "--print-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for line in ["seed = 42", "lambda = 2.0", "epsilon = 0.1", "p_cut = 0.6666666666666666"] {
        assert!(text.contains(line), "missing {line} in\n{text}");
    }
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nlambda = 2.0\nepsilon = 0.15\n").unwrap();
    let o = logkdv(&["pde", "--config", cfg.to_str().unwrap(), "--lambda", "3", "--print-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("lambda = 3.0"));
    assert!(text.contains("epsilon = 0.15"));
}

#[test]
fn invalid_values_exit_with_code_2() {
    let o = logkdv(&["wave", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[stability]\ndleta = 1e-3\n").unwrap();
    let o = logkdv(&["stability", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dleta"));

    assert_eq!(logkdv(&["simulate", "--dt", "-0.05"]).status.code(), Some(2));
    assert_eq!(logkdv(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn residuals_run_writes_artifacts_and_reports() {
    let out = tempfile::tempdir().unwrap();
    let o = logkdv(&["residuals", "--out", out.path().to_str().unwrap(), "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let dir = run_dir(out.path());
    let summary = read_summary(&dir).unwrap();
    assert!(summary.passed);
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with(&summary.config_hash[..12]));
    let names: Vec<&str> = summary.reports.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["residual-scaling", "sampling-constant"]);
    for r in &summary.reports {
        assert_eq!(r.config_hash, summary.config_hash);
        assert!(!r.curve_files.is_empty());
        for f in &r.curve_files {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
    }
    let csv = std::fs::read_to_string(dir.join("curves/residual-scaling.residuals.csv")).unwrap();
    assert!(csv.starts_with("epsilon,res1_l2,res2_l2,total\n"));
    assert_eq!(csv.lines().count(), 6);
    assert!(dir.join("plots/residual-scaling.residuals.svg").is_file());

    let o = logkdv(&["report", "--dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    assert!(table.contains("[10] PASS"));
    assert!(table.contains("[11] PASS"));
}

#[test]
fn report_refuses_mismatched_hash() {
    let out = tempfile::tempdir().unwrap();
    let o = logkdv(&["residuals", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let dir = run_dir(out.path());
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).unwrap();
    // edit the configuration without updating the hash
    let edited = text.replacen("\"seed\": 42", "\"seed\": 43", 1);
    assert_ne!(edited, text);
    std::fs::write(&path, edited).unwrap();
    let o = logkdv(&["report", "--dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}

#[test]
fn single_wave_run_passes_and_writes_profiles() {
    let out = tempfile::tempdir().unwrap();
    let o = logkdv(&["wave", "--epsilon", "0.1", "--lambda", "2", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let dir = run_dir(out.path());
    let w = read_profile(&dir.join("profiles/travelling-sweep.strain_eps0.1.csv")).unwrap();
    assert_eq!(w.tag, logkdv_core::VariableTag::Z);
    assert!(w.values.iter().copied().fold(0.0, f64::max) > 0.0);
    assert!(dir.join("profiles/stationary-waves.stationary_lambda2.json").is_file());
}

#[test]
fn failed_verdict_exits_with_code_1() {
    // two epsilons a factor 4 apart: the scaled error spread exceeds its ceiling
    let out = tempfile::tempdir().unwrap();
    let o = logkdv(&["wave", "--epsilons", "0.05,0.2", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let summary = read_summary(&run_dir(out.path())).unwrap();
    assert!(!summary.passed && !summary.aborted);
}

#[test]
fn compute_error_exits_with_code_3_and_keeps_partial_output() {
    let out = tempfile::tempdir().unwrap();
    let o = logkdv(&["justify", "--dt", "3", "--tau", "0.02", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let dir = run_dir(out.path());
    assert!(std::fs::read_to_string(dir.join("ABORTED")).unwrap().contains("guard"));
    let summary = read_summary(&dir).unwrap();
    assert!(summary.aborted);
    let snap = read_snapshot(&dir.join("snapshots/justification.aborted_eps0.1.bin")).unwrap();
    assert!(snap.w.iter().any(|&w| w <= -0.95));
}
