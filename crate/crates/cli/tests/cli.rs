//! Integration tests of the binary: subcommand outputs, config handling,
//! flag overrides, and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ergodens"));
    c.env("RUST_LOG", "error");
    c
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ergodens-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_writes_series_csv() {
    let dir = tmp_dir("sim");
    let out = bin()
        .args(["--no-timestamp", "--out", dir.to_str().unwrap(), "simulate", "--n", "64", "--tau", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,y_1");
    assert_eq!(text.lines().count(), 66); // header + 65 rows
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn estimate_emits_density_columns() {
    let dir = tmp_dir("est");
    let out = bin()
        .args([
            "--no-timestamp",
            "--out",
            dir.to_str().unwrap(),
            "estimate",
            "--n",
            "1024",
            "--points",
            "0;0.5;1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("density.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x_1,nu_hat,mu_hat,target");
    assert_eq!(text.lines().count(), 4);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn plan_prints_flat_key_values() {
    let dir = tmp_dir("plan");
    let out = bin()
        .args([
            "--no-timestamp",
            "--out",
            dir.to_str().unwrap(),
            "plan",
            "--alpha",
            "2,3,4",
            "--n",
            "16384",
            "--delta",
            "0.0078125",
            "--tau",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("p_star=11"), "{text}");
    assert!(text.contains("regime="));
    assert!(text.contains("h_star=["));
    assert!(text.contains("predicted_rate="));
    let file = std::fs::read_to_string(dir.join("plan.txt")).unwrap();
    assert_eq!(file, text);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn adapt_writes_trace_and_selection() {
    let dir = tmp_dir("adapt");
    let out = bin()
        .args([
            "--no-timestamp",
            "--out",
            dir.to_str().unwrap(),
            "adapt",
            "--n",
            "4096",
            "--tau",
            "0.25",
            "--dimension",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("selected_h=["), "{text}");
    let trace = std::fs::read_to_string(dir.join("gl_trace.csv")).unwrap();
    assert!(trace.starts_with("h_1,h_2,h_3,A,V,criterion,selected"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn adapt_rejects_low_dimension_with_config_error() {
    let dir = tmp_dir("adapt2");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "adapt", "--n", "4096", "--dimension", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_is_honored_and_flags_win() {
    let dir = tmp_dir("cfg");
    let cfg_path = dir.join("exp.toml");
    std::fs::write(
        &cfg_path,
        r#"
        replications = 4
        master_seed = 5

        [model]
        kind = "ou"
        theta = 0.5
        dimension = 1

        [scheme]
        n = 128
        delta = 0.03125
        tau = 0.25
        "#,
    )
    .unwrap();
    // config n = 128 produces 130 lines; the --n flag must override to 64
    let out = bin()
        .args([
            "--no-timestamp",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "simulate",
            "--n",
            "64",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    assert_eq!(text.lines().count(), 66);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_keys_exit_with_code_two() {
    let dir = tmp_dir("badcfg");
    let cfg_path = dir.join("exp.toml");
    std::fs::write(
        &cfg_path,
        r#"
        [model]
        kind = "ou"
        theta = 0.5
        dimension = 1
        not_a_key = true

        [scheme]
        n = 128
        delta = 0.03125
        tau = 0.25
        "#,
    )
    .unwrap();
    let out = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "--out", dir.to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_scheme_exits_with_code_two() {
    let dir = tmp_dir("badn");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "simulate", "--n", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn surface_emits_csv_and_gnuplot_script() {
    let dir = tmp_dir("surf");
    let out = bin()
        .args([
            "--no-timestamp",
            "--out",
            dir.to_str().unwrap(),
            "bench",
            "surface",
            "--steps",
            "9",
            "--half-width",
            "2.0",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("surface.csv")).unwrap();
    assert!(text.starts_with("x1,x2,target,naive,preavg"));
    assert_eq!(text.lines().count(), 1 + 81);
    let gp = std::fs::read_to_string(dir.join("surface.gp")).unwrap();
    assert!(gp.contains("with image"));
    assert!(gp.contains("surface.csv"));
    // the target column at the origin is (2π)^{-1}
    let origin_row = text.lines().find(|l| l.starts_with("0,0,")).expect("origin row present");
    let target: f64 = origin_row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((target - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    // pre-averaging beats the raw estimate over the grid
    let stdout = String::from_utf8(out.stdout).unwrap();
    let grab = |key: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| panic!("missing {key} in {stdout}"))
    };
    let msd_naive = grab("msd_naive=");
    let msd_preavg = grab("msd_preavg=");
    assert!(
        msd_preavg < msd_naive,
        "pre-averaged surface should deviate less: {msd_preavg} vs {msd_naive}"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn timestamp_header_is_present_by_default_and_suppressible() {
    let dir = tmp_dir("ts");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "simulate", "--n", "16"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let with_ts = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    assert!(with_ts.starts_with("# generated "));

    let out = bin()
        .args(["--no-timestamp", "--out", dir.to_str().unwrap(), "simulate", "--n", "16"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let without = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    assert!(without.starts_with("t,x_1,y_1"));
    std::fs::remove_dir_all(&dir).ok();
}
