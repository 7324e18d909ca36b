use std::path::Path;
use std::process::Command;

use ambc::harness::{read_results, DetectorKind};
use ambc_cli::config::{keys_help, KEYS};
use ambc_cli::presets::Scale;
use ambc_cli::{build_config, long_help, run, Cli};
use clap::Parser;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ambc"));
    c.env_remove("RUST_LOG");
    for (k, _) in std::env::vars() {
        if k.starts_with("AMBC_") {
            c.env_remove(k);
        }
    }
    c
}

fn cli(args: &[&str]) -> Cli {
    let mut full = vec!["ambc"];
    full.extend_from_slice(args);
    Cli::try_parse_from(full).unwrap()
}

fn no_env() -> std::iter::Empty<(String, String)> {
    std::iter::empty()
}

#[test]
fn help_lists_every_key_with_its_default() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for k in KEYS {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(k.name))
            .unwrap_or_else(|| panic!("key {} missing from --help", k.name));
        assert!(line.contains("[default: "), "{line}");
    }
    for flag in [
        "--config",
        "--preset",
        "--seed",
        "--workers",
        "--scale",
        "--out-dir",
        "--detector",
        "--fidelity",
        "--bias-mode",
    ] {
        assert!(text.contains(flag), "{flag} missing");
    }
    assert!(long_help().contains(&keys_help()));
}

#[test]
fn empty_config_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.ini");
    std::fs::write(&path, "").unwrap();
    let layered = build_config(&cli(&["--config", path.to_str().unwrap()]), no_env()).unwrap();
    assert_eq!(layered.config, Default::default());
}

#[test]
fn precedence_file_env_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ini");
    std::fs::write(&path, "detector = ml_exact\nQ = 2\nseed = 5\n").unwrap();
    let args = cli(&["--config", path.to_str().unwrap(), "--detector=linear"]);
    let env = vec![
        ("AMBC_SEED".to_string(), "9".to_string()),
        ("AMBC_DETECTOR".to_string(), "min_distance".to_string()),
    ];
    let c = build_config(&args, env).unwrap().config;
    assert_eq!(c.detector, DetectorKind::Linear);
    assert_eq!(c.master_seed, 9);
    assert_eq!(c.q, 2);
}

#[test]
fn bad_antenna_count_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    std::fs::write(&path, "Q = 1\nM = 3\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("line 2") && err.contains("`M`") && err.contains("{1, 2, 4, 8}"),
        "{err}"
    );
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_and_preset_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--set", "colour=blue", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("colour"));

    let out = bin()
        .args(["--preset", "fig99", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for name in [
        "fig4a", "fig4b", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10a", "fig10b",
    ] {
        assert!(err.contains(name), "{name} not listed: {err}");
    }
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = bin()
        .args(["--preset", "fig8", "--out-dir"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn path_loss_preset() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(
        &cli(&[
            "--preset",
            "fig8",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]),
        no_env(),
    )
    .unwrap();
    let text = std::fs::read_to_string(dir.path().join("fig8_path_loss.csv")).unwrap();
    let mut bands = std::collections::BTreeSet::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        bands.insert(f[0].to_string());
        let (d, loss): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        if d >= 1.0 {
            assert!(loss < -30.0, "{line}");
        }
    }
    assert_eq!(bands.len(), 4);
    assert!(s.files.last().unwrap().ends_with("manifest.txt"));
}

#[test]
fn small_trial_cap_flags_low_confidence_points() {
    let dir = tempfile::tempdir().unwrap();
    let args = cli(&[
        "--preset",
        "fig4a",
        "--max-trials",
        "50",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let s = run(&args, no_env()).unwrap();
    assert!(!s.low_confidence.is_empty());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 1"));
    assert!(manifest.lines().any(|l| l.starts_with("low_confidence = ")));
    for f in &s.files[..s.files.len() - 1] {
        if f.to_string_lossy().ends_with("_theoretical.csv") {
            continue;
        }
        assert!(read_results(f).unwrap().iter().all(|p| p.trials <= 50));
    }
}

#[test]
fn single_sweep_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--set",
            "grid=5,10",
            "--set",
            "max_trials=2000",
            "--seed",
            "3",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let points = read_results(&dir.path().join("results.csv")).unwrap();
    assert_eq!(points.len(), 2);
    assert!(Path::new(&dir.path().join("manifest.txt")).exists());
}

#[test]
fn preset_output_depends_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let go = |sub: &str, workers: &str| {
        let out = dir.path().join(sub);
        let mut args = cli(&["--preset", "fig10b", "--seed", "11", "--workers", workers]);
        args.out_dir = out.clone();
        args.scale = Scale::Quick;
        run(&args, no_env()).unwrap();
        std::fs::read(out.join("fig10b_gr10_differential.csv")).unwrap()
    };
    assert_eq!(go("a", "1"), go("b", "2"));
}
