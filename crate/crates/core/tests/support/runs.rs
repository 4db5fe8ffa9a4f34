//! Whole-session checks: reproducibility, scaling, transports and lookahead.

use std::collections::BTreeMap;
use std::time::Instant;

use marketsim::bus::{audit_lookahead, MarketData, Payload, TranscriptEntry};
use marketsim::data::ExternalData;
use marketsim::domain::SimTime;
use marketsim::sim::{self, RunConfig, RunOptions, TransportKind};

use super::{config, Check};

fn opts() -> RunOptions {
    RunOptions::default()
}

/// Five runs of the 150-agent candle config, compared byte for byte.
pub fn check_determinism(runs: usize) -> Check {
    let cfg = config("candle_ma_150.toml");
    let agents: usize = cfg.agents.iter().map(|g| g.count).sum();
    let t = Instant::now();
    let first = sim::run(&cfg, &opts()).map_err(|e| e.to_string())?;
    let bars = first.candles.len();
    if agents < 150 || bars < 1000 {
        return Err(format!("config too small: {agents} agents, {bars} bars"));
    }
    if first.log.rows().is_empty() {
        return Err("no trades, nothing to compare".into());
    }
    super::metrics::keys_present(&first.outputs.report_json)?;
    for i in 1..runs {
        let next = sim::run(&cfg, &opts()).map_err(|e| e.to_string())?;
        if next.outputs.trade_log != first.outputs.trade_log {
            return Err(format!("run {} trade log differs", i + 1));
        }
        if next.outputs.report_json != first.outputs.report_json {
            return Err(format!("run {} report.json differs", i + 1));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("{runs} runs identical but took {secs:.1} s"));
    }
    Ok(format!(
        "{runs} runs x {agents} agents x {bars} bars identical ({} log rows) in {secs:.1} s",
        first.log.rows().len()
    ))
}

/// Per-agent wall time at 150 agents against the 10-agent baseline.
pub fn check_scaling() -> Check {
    let cfg = config("candle_ma_150.toml");
    let t = Instant::now();
    let rows = sim::bench(&cfg, &[10, 50, 150], &opts()).map_err(|e| e.to_string())?;
    let base = rows[0].per_agent_ms;
    let top = rows[2].per_agent_ms;
    let ratio = top / base;
    let shape: Vec<String> = rows.iter().map(|r| format!("{}:{:.2}ms", r.agents, r.per_agent_ms)).collect();
    let secs = t.elapsed().as_secs_f64();
    if ratio <= 3.0 && secs < 300.0 {
        Ok(format!("per-agent {} ratio 150/10 = {ratio:.2} in {secs:.0} s", shape.join(" ")))
    } else {
        Err(format!("per-agent {} ratio {ratio:.2} in {secs:.0} s", shape.join(" ")))
    }
}

fn over(cfg: &RunConfig, kind: TransportKind) -> Result<String, String> {
    let mut c = cfg.clone();
    c.transport.kind = kind;
    c.transport.processes = false;
    Ok(sim::run(&c, &opts()).map_err(|e| e.to_string())?.outputs.trade_log)
}

/// Same config over the in-process broker and over loopback TCP.
pub fn check_transports(names: &[&str]) -> Check {
    let mut rows = 0;
    for name in names {
        let cfg = config(name);
        let a = over(&cfg, TransportKind::InProcess)?;
        let b = over(&cfg, TransportKind::Tcp)?;
        if a != b {
            return Err(format!("{name}: trade logs differ between transports"));
        }
        if a.lines().count() < 2 {
            return Err(format!("{name}: empty trade log"));
        }
        rows += a.lines().count() - 1;
    }
    Ok(format!("{} configs, {rows} log rows byte-identical in-process and over TCP", names.len()))
}

/// Latest simulation time a delivered message speaks about, read straight
/// from the payload fields.
fn stamp(payload: &Payload) -> Option<SimTime> {
    match payload {
        Payload::MarketData(MarketData::Bar(b)) => Some(SimTime(b.bar_start.0 + b.timeframe.0)),
        Payload::MarketData(MarketData::Quote(q)) => Some(q.as_of),
        Payload::MarketData(MarketData::BookTop(b)) => Some(b.as_of),
        Payload::MarketData(MarketData::Indicators { frame, .. }) => Some(frame.as_of),
        Payload::ExternalData(ExternalData::News { items, .. }) => items.iter().map(|i| i.published_at).max(),
        other => other.payload_time(),
    }
}

pub fn lookahead(transcript: &[TranscriptEntry]) -> Vec<String> {
    let mut bad: Vec<String> = transcript
        .iter()
        .filter(|e| e.recipient != marketsim::bus::ENGINE_ID)
        .filter_map(|e| {
            let t = stamp(&e.envelope.payload)?.max(e.envelope.sim_time);
            (t > e.engine_clock).then(|| format!("{} got {} at {} stamped {}", e.recipient, e.envelope.topic, e.engine_clock, t))
        })
        .collect();
    bad.extend(audit_lookahead(transcript).iter().map(|v| format!("{v:?}")));
    bad
}

/// Full transcripts of reference runs, every delivery to an agent checked.
pub fn check_lookahead(names: &[&str]) -> Check {
    let mut delivered = 0usize;
    let mut by_kind: BTreeMap<&'static str, usize> = BTreeMap::new();
    for name in names {
        let cfg = config(name);
        let out = sim::run(
            &cfg,
            &RunOptions {
                transcript: true,
                launcher: None,
            },
        )
        .map_err(|e| e.to_string())?;
        if out.transcript.is_empty() {
            return Err(format!("{name}: empty transcript"));
        }
        if let Some(v) = lookahead(&out.transcript).first() {
            return Err(format!("{name}: {v}"));
        }
        for e in &out.transcript {
            let kind = match &e.envelope.payload {
                Payload::MarketData(MarketData::Bar(_)) => "bar",
                Payload::MarketData(_) => "market",
                Payload::ExternalData(_) => "external",
                Payload::ExecutionReport(_) => "exec",
                _ => "other",
            };
            *by_kind.entry(kind).or_default() += 1;
        }
        delivered += out.transcript.len();
    }
    for kind in ["bar", "market", "external", "exec"] {
        if !by_kind.contains_key(kind) {
            return Err(format!("no {kind} deliveries in the transcripts"));
        }
    }
    Ok(format!("{delivered} deliveries ({by_kind:?}), 0 stamped after the engine clock"))
}
