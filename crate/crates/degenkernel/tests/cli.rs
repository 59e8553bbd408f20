//! End-to-end tests of the command-line surface: flag parsing, exit codes,
//! output formats and byte-level determinism.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_degenkernel"))
}

fn run(args: &[&str]) -> std::process::Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

#[test]
fn eval_power_family_matches_series_value() {
    // p_1(1,1,1) = e^{-2} I_1(2); 60-term factorial oracle.
    let mut i1 = 0.0f64;
    let mut nf = 1.0f64;
    let mut n1f = 1.0f64;
    for n in 0..60 {
        if n > 0 {
            nf *= n as f64;
            n1f *= (n + 1) as f64;
        }
        i1 += 1.0 / (nf * n1f);
    }
    let expected = (-2.0f64).exp() * i1;
    let out = stdout(&[
        "eval", "--family", "power", "--alpha", "1", "--x", "1", "--y", "1", "--t", "1",
    ]);
    let value: f64 = out
        .lines()
        .find(|l| l.starts_with("value"))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((value - expected).abs() < 1e-12 * expected);
}

#[test]
fn eval_heat_kernel_from_expressions() {
    let out = stdout(&["eval", "--a", "1", "--b", "0", "--x", "1", "--y", "1", "--t", "1"]);
    let value: f64 = out
        .lines()
        .find(|l| l.starts_with("value"))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let expected = (std::f64::consts::PI).sqrt().recip() * (-0.5f64).exp() * 0.5f64.sinh();
    assert!((value - expected).abs() < 1e-9, "{value} vs {expected}");
}

#[test]
fn eval_rejects_inadmissible_coefficient_with_domain_exit_code() {
    let out = run(&["eval", "--a", "x^2", "--b", "0", "--x", "1", "--y", "1", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Condition 1"), "stderr: {err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["eval", "--x", "1"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(
        run(&[
            "simulate", "--family", "power", "--alpha", "1", "--x0", "1", "--t", "1", "--paths",
            "0", "--dt", "0.01",
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn table_emits_expected_csv_shape_and_round_trips() {
    let out = stdout(&[
        "table",
        "--family",
        "power",
        "--alpha",
        "1",
        "--x-grid",
        "0.5:1.5:3",
        "--y-grid",
        "0.5:1.5:3",
        "--t-grid",
        "1:1:1",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "x,y,t,p,quad_err,trunc_err");
    assert_eq!(lines.len(), 1 + 9, "header plus 3x3x1 data rows");
    // Full-precision decimal re-parses to bit-identical doubles.
    for row in &lines[1..] {
        let fields: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields.len(), 6);
        let reprinted = format!("{:.16e}", fields[3]);
        let reparsed: f64 = reprinted.parse().unwrap();
        assert_eq!(reparsed.to_bits(), fields[3].to_bits());
    }
}

#[test]
fn table_json_format() {
    let out = stdout(&[
        "table",
        "--family",
        "power",
        "--alpha",
        "0.5",
        "--x-grid",
        "1:2:2",
        "--y-grid",
        "1:1:1",
        "--t-grid",
        "0.5:1:2",
        "--format",
        "json",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    let rows = parsed.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        for key in ["x", "y", "t", "p", "quad_err", "trunc_err"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn classify_reports_the_three_cases() {
    for (alpha, expected) in [("2", "natural"), ("1.5", "exit"), ("0.5", "regular")] {
        let out = stdout(&["classify", "--a", &format!("x^{alpha}"), "--b", "0"]);
        let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(
            parsed["boundary_type"].as_str().unwrap(),
            expected,
            "alpha = {alpha}"
        );
    }
}

#[test]
fn simulate_is_byte_deterministic_across_runs_and_thread_counts() {
    let args = [
        "simulate", "--family", "power", "--alpha", "1", "--x0", "1", "--t", "0.5", "--paths",
        "4000", "--dt", "0.001", "--seed", "42", "--bridge",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let single = bin().args(args).env("DEGENKERNEL_THREADS", "1").output().unwrap();
    let dual = bin().args(args).env("DEGENKERNEL_THREADS", "2").output().unwrap();
    assert_eq!(single.stdout, dual.stdout);
    assert_eq!(single.stdout, a.stdout);
}

#[test]
fn simulate_survival_matches_analytic_value() {
    let out = stdout(&[
        "simulate", "--family", "power", "--alpha", "1", "--x0", "1", "--t", "1", "--paths",
        "20000", "--dt", "0.0005", "--seed", "7", "--bridge",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    let survival = parsed["survival"].as_f64().unwrap();
    let se = parsed["survival_se"].as_f64().unwrap();
    let expected = 1.0 - (-1.0f64).exp();
    assert!(
        (survival - expected).abs() < 4.0 * se + 4e-3,
        "survival {survival} vs {expected} (se {se})"
    );
}

#[test]
fn simulate_writes_histogram_csv() {
    let dir = std::env::temp_dir().join(format!("degenkernel-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let hist = dir.join("hist.csv");
    stdout(&[
        "simulate",
        "--family",
        "power",
        "--alpha",
        "1",
        "--x0",
        "1",
        "--t",
        "0.5",
        "--paths",
        "2000",
        "--dt",
        "0.001",
        "--seed",
        "3",
        "--hist-out",
        hist.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&hist).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,mass,se");
    assert!(lines.len() > 10);
    // Masses sum to the survival probability within rounding.
    let mass_sum: f64 = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!(mass_sum <= 1.0 + 1e-12);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn massloss_alpha_one_closed_form() {
    let out = stdout(&["massloss", "--alpha", "1", "--x", "1", "--t", "1", "--asymptotic"]);
    let value: f64 = out
        .lines()
        .find(|l| l.starts_with("mass_loss "))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((value - (-1.0f64).exp()).abs() < 1e-14);
}

#[test]
fn massloss_domain_error() {
    let out = run(&["massloss", "--alpha", "2.5", "--x", "1", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_filter_runs_matching_criteria_only() {
    let out = stdout(&["selftest", "--filter", "symmetry", "--json"]);
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    let arr = parsed.as_array().unwrap();
    assert_eq!(arr.len(), 1);
    assert_eq!(arr[0]["name"].as_str().unwrap(), "kernel-symmetry");
    assert!(arr[0]["pass"].as_bool().unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = std::env::temp_dir().join(format!("degenkernel-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"family":"power","alpha":1.0,"x":1.0,"y":1.0,"t":1.0}"#).unwrap();
    let from_cfg = stdout(&["--config", cfg.to_str().unwrap(), "eval"]);
    let direct = stdout(&[
        "eval", "--family", "power", "--alpha", "1", "--x", "1", "--y", "1", "--t", "1",
    ]);
    assert_eq!(from_cfg, direct);
    // A flag overrides the config value.
    let overridden = stdout(&["--config", cfg.to_str().unwrap(), "eval", "--t", "2"]);
    assert_ne!(overridden, direct);
    let _ = std::fs::remove_dir_all(&dir);
}
