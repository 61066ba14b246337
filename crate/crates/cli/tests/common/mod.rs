#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_wdvd");

/// Runs `wdvd` inside `dir`.
pub fn wdvd(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env("RUST_LOG", "off")
        .output()
        .expect("wdvd runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wdvd(dir, args);
    assert!(
        out.status.success(),
        "wdvd {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(dir: &Path, args: &[&str]) -> i32 {
    wdvd(dir, args).status.code().expect("exit code")
}

pub fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Generates a synthetic corpus in `dir` and returns the config path (relative to `dir`).
pub fn synth(dir: &Path, seed: u64, positives: usize, negatives: usize) -> PathBuf {
    let (p, n) = (positives.to_string(), negatives.to_string());
    ok(
        dir,
        &[
            "--seed",
            &seed.to_string(),
            "synth",
            "--dir",
            ".",
            "--positives",
            &p,
            "--negatives",
            &n,
        ],
    );
    PathBuf::from("pipeline.conf")
}

/// Appends lines to the generated config.
pub fn extend_config(dir: &Path, lines: &str) {
    let path = dir.join("pipeline.conf");
    let mut text = read(&path);
    text.push_str(lines);
    fs::write(path, text).unwrap();
}

/// Data rows of a `revision_id<TAB>score` file.
pub fn score_rows(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != "revision_id\tscore")
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// Value of `key=` in a provenance header line.
pub fn header_field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let first = text.lines().next()?;
    let first = first.strip_prefix("<!-- ").unwrap_or(first);
    first
        .split_whitespace()
        .find_map(|w| w.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

/// Rows of a report table keyed by model tag.
pub fn table_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}
