//! Behavior of the command-line driver: exit codes, file outputs,
//! configuration precedence, and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn sstokes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sstokes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_time_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "converge-time",
        "--case",
        "I",
        "--L",
        "4",
        "--n",
        "4",
        "--tau-list",
        "2^-2,2^-3",
        "--ref-tau",
        "2^-5",
        "--samples",
        "4",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn smoke_run_writes_well_formed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = sstokes(&tiny_time_args(out, &["--levels", "2"]));
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("results_time_I.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(
        lines[0],
        "study,case,n,h,tau,M,err_u_ms,err_u_se,err_pint_ms,err_pint_se"
    );
    assert_eq!(lines.len(), 3, "header plus one row per level");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 10);
    }
    // two levels: the slope is omitted with a warning
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("warning: slope omitted"));
    assert!(dir.path().join("plot_time_I.svg").exists());
    assert!(dir.path().join("samples_time_I.csv").exists());
}

#[test]
fn repeated_runs_emit_byte_identical_csv() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let out = dir.to_str().unwrap();
        let result = sstokes(&[
            "converge-time",
            "--L",
            "4",
            "--n",
            "4",
            "--tau-list",
            "2^-2,2^-3,2^-4",
            "--ref-tau",
            "2^-5",
            "--samples",
            "4",
            "--seed",
            "99",
            "--out",
            out,
        ]);
        assert!(result.status.success());
        (
            std::fs::read(dir.join("results_time_I.csv")).unwrap(),
            std::fs::read(dir.join("samples_time_I.csv")).unwrap(),
            std::fs::read(dir.join("slopes_time_I.csv")).unwrap(),
        )
    };
    let a = run(dir1.path());
    let b = run(dir2.path());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn show_config_prints_model_defaults() {
    let result = sstokes(&["converge-time", "--show-config"]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("T=1"));
    assert!(stdout.contains("# f=(1, 1)"));
    assert!(stdout.contains("# u0=(0, 0)"));
    assert!(stdout.contains("# domain=[0,1]x[0,1]"));
    assert!(stdout.contains("# epsilon=0.1"));
}

#[test]
fn config_errors_exit_with_code_two_and_parsable_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "unknown_key=1\n").unwrap();
    let result = sstokes(&["converge-time", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.lines().any(|l| l.starts_with("error: kind=config")),
        "stderr: {stderr}"
    );

    // invalid study geometry is also a config error
    let result = sstokes(&[
        "converge-time",
        "--n",
        "4",
        "--tau-list",
        "0.3",
        "--ref-tau",
        "2^-5",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn config_file_and_flags_layer_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "samples=8\nL=4\nn_list=4\ntau_list=2^-2,2^-3\nref_tau=2^-5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = sstokes(&[
        "converge-time",
        "--config",
        cfg_path.to_str().unwrap(),
        "--samples",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let results = std::fs::read_to_string(out.join("results_time_I.csv")).unwrap();
    // the flag beats the file: M column holds 2
    for line in results.lines().skip(1) {
        assert_eq!(line.split(',').nth(5), Some("2"));
    }
}

#[test]
fn semigroup_check_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = sstokes(&["semigroup-check", "--out", out]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("semigroup_report.txt")).unwrap();
    assert!(report.contains("rational_stability"));
    assert!(report.contains("fn_bounds"));
    assert!(report.contains("discrete_energy_decay"));
    assert!(report.contains("projection_h1_stability"));
    assert!(!report.contains("FAIL"));
}

#[test]
fn stability_subcommand_runs_at_reduced_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = sstokes(&[
        "stability",
        "--n",
        "8",
        "--tau",
        "2^-3",
        "--L",
        "4",
        "--samples",
        "4",
        "--out",
        out,
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert!(text.starts_with("tau,e_max_l2_sq,e_sum_incr_sq,e_sum_h1_sq"));
    assert!(text.contains("# pass: true"));
}

#[test]
fn single_run_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = sstokes(&[
        "single-run",
        "--n",
        "8",
        "--tau",
        "2^-4",
        "--L",
        "4",
        "--out",
        out,
    ]);
    assert!(result.status.success());
    let text = std::fs::read_to_string(dir.path().join("single_run.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("n,tau,case,steps"));
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "8");
    assert_eq!(fields[3], "16");
    // residual columns parse as small numbers
    let div: f64 = fields[7].parse().unwrap();
    let energy: f64 = fields[8].parse().unwrap();
    assert!(div <= 1e-9 && energy <= 1e-9);
}

#[test]
fn case_compare_emits_combined_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = sstokes(&[
        "case-compare",
        "--cases",
        "I,III",
        "--L",
        "4",
        "--n-list",
        "2,4",
        "--ref-n",
        "8",
        "--tau",
        "2^-3",
        "--ref-tau",
        "2^-3",
        "--samples",
        "2",
        "--out",
        out,
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("results_space_compare.csv")).unwrap();
    let cases: Vec<&str> = results
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert!(cases.contains(&"I") && cases.contains(&"III"));
    assert!(dir.path().join("plot_space_compare.svg").exists());
}
