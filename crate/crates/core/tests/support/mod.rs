//! Oracles and criterion checks shared by the integration tests and the
//! acceptance runner. Each check returns a one-line summary or the first
//! counterexample.
#![allow(dead_code)]

pub mod candles;
pub mod constraints;
pub mod indicators;
pub mod matching;
pub mod metrics;
pub mod runs;

use std::path::PathBuf;

use marketsim::sim::RunConfig;

pub type Check = Result<String, String>;

pub fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config(name: &str) -> RunConfig {
    let path = workspace().join("configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Relative closeness with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel * scale.max(1e-300) || (a - b).abs() <= 1e-15
}

/// A config written inline, with paths relative to `configs/`.
pub fn inline(text: &str) -> RunConfig {
    let mut cfg = RunConfig::from_toml(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    cfg.base_dir = workspace().join("configs");
    cfg
}

/// The minute-bar fixture as `(bar_start, open, close)` in ticks.
pub fn fixture_bars() -> Vec<(u64, i64, i64)> {
    let text = std::fs::read_to_string(workspace().join("fixtures/bars_1m.csv")).expect("bars fixture");
    let ticks = |s: &str| (s.parse::<f64>().expect("price") * 100.0).round() as i64;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().expect("time"), ticks(f[1]), ticks(f[4]))
        })
        .collect()
}

pub const BARS_START: u64 = 1_704_205_800_000;
