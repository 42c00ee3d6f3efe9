//! Shared helpers for the integration suites: CLI invocation and CSV parsing.
#![allow(dead_code)] // each test binary uses its own subset

use std::path::{Path, PathBuf};
use std::process::Output;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

pub fn config_path(name: &str) -> PathBuf {
    workspace_root().join("configs").join(name)
}

pub fn scratch_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("perfdyn-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir.join(name)
}

pub fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_perfdyn"))
        .args(args)
        .output()
        .expect("spawn perfdyn")
}

/// Extracts the `theta` series of one (agent, coord) from a trajectory CSV,
/// ordered by round.
pub fn theta_series(csv: &str, agent: usize, coord: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[1].parse::<usize>() == Ok(agent) && fields[2].parse::<usize>() == Ok(coord) {
            out.push(fields[3].parse::<f64>().expect("theta value"));
        }
    }
    out
}

/// Extracts the `loss_total` column once per round.
pub fn total_loss_series(csv: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last_t = String::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] != last_t {
            last_t = fields[0].to_string();
            out.push(fields[7].parse::<f64>().expect("loss_total"));
        }
    }
    out
}

/// Reads `key = value` from a flat report.
pub fn report_value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report.lines().find_map(|line| {
        let (k, v) = line.split_once(" = ")?;
        (k == key).then_some(v)
    })
}

pub fn criterion(number: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {number:>2} [{name}]: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} [{name}] failed: {detail}");
}
