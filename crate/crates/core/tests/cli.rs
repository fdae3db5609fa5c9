//! End-to-end checks of the command-line binary: validate, run, and plot on a
//! small self-contained config.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convhom"))
}

const SMALL: &str = r#"
schema_version = 1
experiment = "cell-campaign"
label = "cli-smoke"

[kernel]
family = "ball"
r0 = 1.0

[environment]
kind = "constant"

[grid]
d = 1
h = 0.25
k_schedule = [2.0]
r_schedule = [8.0, 16.0]
z = [1.0]

[seeds]
base = 1
count = 2

[output]
directory = "unused"
"#;

#[test]
fn validate_accepts_shipped_presets() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = bin().arg("validate").arg(&path).output().unwrap();
        assert!(
            out.status.success(),
            "validate failed on {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn run_then_plot_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let out_dir = tmp.path().join("out");

    let run = bin()
        .arg("run")
        .arg(&cfg_path)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(out_dir.join("results.csv").is_file());
    assert!(out_dir.join("summary.json").is_file());
    assert!(out_dir.join("run.log").is_file());

    let plot_path = tmp.path().join("gamma_vs_R.dat");
    let plot = bin()
        .arg("plot")
        .arg(out_dir.join("results.csv"))
        .arg("--kind")
        .arg("gamma_vs_R")
        .arg("--output")
        .arg(&plot_path)
        .output()
        .unwrap();
    assert!(
        plot.status.success(),
        "plot failed: {}",
        String::from_utf8_lossy(&plot.stderr)
    );
    let table = std::fs::read_to_string(&plot_path).unwrap();
    assert!(table.starts_with('#'), "plot table must carry headers");
    // Two R levels, one line each after the two header lines.
    assert_eq!(table.lines().count(), 4, "table was:\n{table}");
}

#[test]
fn rejects_malformed_config_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.toml");
    std::fs::write(&cfg_path, "schema_version = 99\n").unwrap();
    let out = bin().arg("validate").arg(&cfg_path).output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
