//! Black-box tests of the `lpsr` binary: help text is frozen as golden
//! files, exit codes follow the usual CLI conventions, and errors are
//! single-line and machine parsable.

use std::path::Path;
use std::process::Command;

fn lpsr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpsr"))
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn top_level_help_matches_golden() {
    let out = lpsr().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), golden("help.txt"));
}

#[test]
fn every_subcommand_help_matches_golden() {
    for sub in [
        "gen-data", "degrade", "train", "evaluate", "ablate", "report", "loss-eval", "selfcheck",
    ] {
        let out = lpsr().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "{sub} --help failed");
        assert_eq!(
            String::from_utf8_lossy(&out.stdout),
            golden(&format!("help_{sub}.txt")),
            "help text drifted for {sub}"
        );
    }
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = lpsr().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_flag_exits_2() {
    let out = lpsr().args(["train", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_fails_with_a_one_line_error_naming_the_path() {
    let out = lpsr()
        .args(["train", "--config", "definitely_missing.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.contains("definitely_missing.toml"));
}

#[test]
fn gen_data_writes_a_manifest_and_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = lpsr()
        .args([
            "gen-data",
            "--out",
            dir.path().join("ds").to_str().unwrap(),
            "--count-brazilian",
            "3",
            "--count-mercosur",
            "3",
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("ds/manifest.jsonl").exists());
    // The effective config snapshot lands next to the manifest.
    assert!(dir.path().join("ds/run_config.toml").exists());
}

#[test]
fn selfcheck_passes_and_prints_one_line_per_property() {
    let out = lpsr().args(["selfcheck", "--seed", "3"]).output().unwrap();
    assert!(
        out.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let passes = stdout.lines().filter(|l| l.starts_with("PASS ")).count();
    assert!(passes >= 9, "expected at least 9 PASS lines:\n{stdout}");
    assert!(!stdout.contains("FAIL "));
}
