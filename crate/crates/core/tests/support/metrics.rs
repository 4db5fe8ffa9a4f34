//! Metric checks: a ledger without losses, drawdown by exhaustive search, and
//! the key set of the exported report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marketsim::domain::{AssetClass, Instrument, Side, SimTime};
use marketsim::evaluator::{max_drawdown, report_json, Evaluator, MetricConfig, MetricRegistry, RunReport};

use super::Check;

/// Written out here rather than taken from the library, so a renamed key fails.
pub const REPORT_KEYS: [&str; 15] = [
    "ROI",
    "Sharpe Ratio - SR",
    "Annualized SR",
    "Sortino Ratio",
    "Win Rate",
    "Profit Factor",
    "Max Drawdown",
    "Num Trades",
    "Num Closed Trades",
    "Total Traded Volume",
    "Average Trade Size",
    "ROIC",
    "Profit per Trade",
    "Last Portfolio Value",
    "Realized P&L",
];

/// Largest `(e[i] - e[j]) / e[i]` over all `i < j`.
pub fn brute_drawdown(e: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if e[i] > 0.0 {
                worst = worst.max((e[i] - e[j]) / e[i]);
            }
        }
    }
    worst
}

pub fn winners_only() -> Result<RunReport, String> {
    let instrument = Instrument::new("X", AssetClass::Equity, 0.01, 1).map_err(|e| e.to_string())?;
    let mut ev = Evaluator::new(instrument);
    ev.add_agent("w", "test", 10_000.0, SimTime(0));
    let fills = [
        (1, Side::Buy, 10, 10_000.0),
        (2, Side::Sell, 10, 10_500.0),
        (3, Side::Buy, 5, 10_200.0),
        (4, Side::Sell, 5, 10_200.0),
        (5, Side::Sell, 4, 11_000.0),
        (6, Side::Buy, 4, 10_900.0),
    ];
    for (t, side, qty, px) in fills {
        ev.record_fill("w", SimTime(t), side, qty, px).map_err(|e| e.to_string())?;
        ev.record_equity("w", SimTime(t), 10_000.0 + t as f64).map_err(|e| e.to_string())?;
    }
    let agents = ev
        .agent_reports(&MetricConfig::default(), &MetricRegistry::new())
        .map_err(|e| e.to_string())?;
    Ok(RunReport {
        symbol: "X".into(),
        mode: "candle_level".into(),
        seed: 0,
        start: SimTime(0),
        end: SimTime(6),
        decision_points: 6,
        agents,
    })
}

pub fn check_profit_factor() -> Check {
    let report = winners_only()?;
    let m = &report.agents[0].metrics;
    if m.num_closed_trades != 3 {
        return Err(format!("expected 3 closed trades, got {}", m.num_closed_trades));
    }
    match m.profit_factor {
        Some(999.0) => Ok("3 winning / break-even trades, no losses: Profit Factor = 999.0".into()),
        other => Err(format!("profit factor {other:?}")),
    }
}

pub fn check_drawdown(series: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..series {
        let n = rng.gen_range(1..200);
        let mut v = rng.gen_range(100.0..10_000.0);
        let e: Vec<f64> = (0..n)
            .map(|_| {
                v *= 1.0 + rng.gen_range(-0.08..0.08);
                v
            })
            .collect();
        let got = max_drawdown(&e).ok_or("no drawdown for a non-empty series")?;
        let want = brute_drawdown(&e);
        if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(format!("series {s}: {got} vs brute force {want}"));
        }
    }
    Ok(format!("{series} random equity series equal the exhaustive peak/trough search at 1e-12"))
}

/// Every agent object in a report.json text carries the fifteen row names.
pub fn keys_present(json: &str) -> Check {
    let v: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let agents = v["agents"].as_array().ok_or("report has no agents array")?;
    if agents.is_empty() {
        return Err("report has no agents".into());
    }
    for a in agents {
        let m = a["metrics"].as_object().ok_or("agent without metrics")?;
        if let Some(k) = REPORT_KEYS.iter().find(|k| !m.contains_key(**k)) {
            return Err(format!("{} lacks {k:?}", a["agent_id"]));
        }
    }
    Ok(format!("all 15 metric rows present for {} agents", agents.len()))
}

pub fn check_report_keys() -> Check {
    let json = report_json(&winners_only()?).map_err(|e| e.to_string())?;
    keys_present(&json)
}
