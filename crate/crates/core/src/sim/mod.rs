//! Running a whole session: load inputs, host agents, drive the clock,
//! and produce the run records.

mod candle;
mod config;
mod engine;
mod host;
mod orders;
mod tradelog;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Account, AgentError, StrategySpec};
use crate::bus::{Broker, BusError, Payload, TranscriptEntry, CONTROL_TOPIC};
use crate::data::{AdapterRegistry, DataError, Dataset, ExternalStore, LoadContext, StreamKind};
use crate::domain::{AgentId, Candle, Instrument, SimTime};
use crate::evaluator::{
    render_html, report_json, write_equity_csv, write_trades_csv, AgentSeries, EvalError, Evaluator, MetricRegistry,
    RunReport,
};
use crate::indicators::IndicatorEngine;
use crate::matching::{fnv1a, BookEvent};

pub use config::{
    AgentGroup, AgentSlot, DataConfig, LatencyConfig, Mode, ReportConfig, RunConfig, SessionConfig, Source,
    TransportConfig, TransportKind,
};
pub use host::{run_remote_agent, AgentLauncher};
pub use tradelog::{LogEvent, LogRow, TradeLog};

use engine::Engine;
use host::Hosted;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("runtime: {0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl SimError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 1,
            SimError::Data(_) => 2,
            SimError::Runtime(_) | SimError::Io(_) => 3,
        }
    }
}

impl From<BusError> for SimError {
    fn from(e: BusError) -> Self {
        SimError::Runtime(e.to_string())
    }
}

impl From<EvalError> for SimError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Export(m) => SimError::Io(m),
            e => SimError::Runtime(e.to_string()),
        }
    }
}

impl From<DataError> for SimError {
    fn from(e: DataError) -> Self {
        SimError::Data(e.to_string())
    }
}

impl From<AgentError> for SimError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::BadWindows { .. } | AgentError::ProviderConfig(_) => SimError::Config(e.to_string()),
            e => SimError::Runtime(e.to_string()),
        }
    }
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Keep every delivery to an agent for the lookahead audit.
    pub transcript: bool,
    /// Needed when agents run as processes.
    pub launcher: Option<Arc<dyn AgentLauncher>>,
}

/// File contents of a finished run, keyed by nothing but their role.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub trade_log: String,
    pub trades_csv: String,
    pub equity_csv: String,
    pub audit_jsonl: String,
    pub report: RunReport,
    pub report_json: String,
    pub report_html: String,
    pub report_data: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub agents: usize,
    pub decision_points: u64,
    pub audit_lines: u64,
    /// Messages handed to subscribers by the broker.
    pub delivered: u64,
    pub wall: Duration,
    pub agent_failures: Vec<(AgentId, String)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outputs: RunOutputs,
    pub series: Vec<AgentSeries>,
    pub candles: Vec<Candle>,
    pub log: TradeLog,
    pub transcript: Vec<TranscriptEntry>,
    pub stats: RunStats,
}

/// What `report.html` is drawn from; saved so a run can be re-rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportData {
    pub instrument: Instrument,
    pub html_charts: usize,
    pub report: RunReport,
    pub candles: Vec<Candle>,
    pub series: Vec<AgentSeries>,
}

struct Inputs {
    bars: Vec<Candle>,
    events: Vec<BookEvent>,
    store: ExternalStore,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs, SimError> {
    let registry = AdapterRegistry::with_builtins();
    let cx = LoadContext {
        instrument: cfg.instrument.clone(),
        timeframe: cfg.timeframe(),
        lobster: cfg.data.lobster,
    };
    let load = |source: &Source, kind: StreamKind| registry.load_expecting(&source.adapter, kind, &cfg.resolve(&source.path), &cx);
    let mut inputs = Inputs {
        bars: Vec::new(),
        events: Vec::new(),
        store: ExternalStore::default(),
    };
    let (mut news, mut fundamentals) = (Vec::new(), Vec::new());
    match cfg.mode {
        Mode::CandleLevel => {
            let source = cfg.data.bars.as_ref().ok_or_else(|| SimError::Config("candle_level needs data.bars".into()))?;
            if let Dataset::Bars(load) = load(source, StreamKind::Bars)? {
                for w in &load.warnings {
                    log::warn!("{w}");
                }
                for gap in &load.gaps {
                    log::warn!("{} bar(s) missing after {}", gap.missing_bars, gap.after);
                }
                let start = cfg.session.start_ms.unwrap_or(0);
                let end = cfg.session.end_ms.unwrap_or(u64::MAX);
                inputs.bars = load
                    .candles
                    .into_iter()
                    .filter(|c| c.bar_start.0 >= start && c.bar_start.0 < end)
                    .collect();
            }
            if inputs.bars.is_empty() {
                return Err(SimError::Data(format!("{}: no bars inside the session window", source.path.display())));
            }
        }
        Mode::OrderLevel => {
            let source = cfg
                .data
                .events
                .as_ref()
                .ok_or_else(|| SimError::Config("order_level needs data.events".into()))?;
            if let Dataset::OrderEvents(load) = load(source, StreamKind::OrderEvents)? {
                for (why, n) in &load.skipped {
                    log::warn!("skipped {n} event row(s): {why}");
                }
                inputs.events = load.events;
            }
            if inputs.events.is_empty() {
                return Err(SimError::Data(format!("{}: no order events", source.path.display())));
            }
        }
    }
    if let Some(source) = &cfg.data.news {
        if let Dataset::News(items) = load(source, StreamKind::News)? {
            news = items;
        }
    }
    if let Some(source) = &cfg.data.fundamentals {
        if let Dataset::Fundamentals(items) = load(source, StreamKind::Fundamentals)? {
            fundamentals = items;
        }
    }
    inputs.store = ExternalStore::new(news, fundamentals);
    Ok(inputs)
}

/// Short strategy label used in reports.
fn strategy_label(spec: &StrategySpec) -> String {
    match spec {
        StrategySpec::BuyAndHold => "buy_and_hold".into(),
        StrategySpec::MaCrossover { fast, slow } => format!("ma_crossover({fast},{slow})"),
        StrategySpec::Random { .. } => "random".into(),
        StrategySpec::External(_) => "external".into(),
    }
}

/// Session bounds for the mode: `[start, end)`.
fn window(cfg: &RunConfig, inputs: &Inputs) -> Result<(SimTime, SimTime), SimError> {
    match cfg.mode {
        Mode::CandleLevel => {
            let first = &inputs.bars[0];
            let last = &inputs.bars[inputs.bars.len() - 1];
            Ok((first.bar_start, last.end()))
        }
        Mode::OrderLevel => {
            let start = SimTime(cfg.session.start_ms.unwrap_or(inputs.events[0].event_time.0));
            let last = inputs.events[inputs.events.len() - 1].event_time;
            let end = SimTime(cfg.session.end_ms.unwrap_or(last.0 + 1));
            if end <= start {
                return Err(SimError::Data(format!("session window [{start}, {end}) is empty")));
            }
            Ok((start, end))
        }
    }
}

/// Runs one session. Inputs are loaded before any agent starts, so bad data
/// fails fast and nothing is produced.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, SimError> {
    let started = Instant::now();
    cfg.validate(&AdapterRegistry::with_builtins())?;
    let inputs = load_inputs(cfg)?;
    let (start, end) = window(cfg, &inputs)?;
    let instrument = cfg.instrument.clone();
    let roster = cfg.roster();

    let mut evaluator = Evaluator::new(instrument.clone());
    let mut accounts = BTreeMap::new();
    for slot in &roster {
        evaluator.add_agent(slot.agent_id.as_str(), &strategy_label(&slot.strategy), slot.cash, start);
        accounts.insert(slot.agent_id.clone(), Account::new(instrument.value_to_ticks(slot.cash)));
    }
    let mut indicators = IndicatorEngine::<f64>::new(cfg.indicators.clone(), instrument.tick_size)
        .map_err(|e| SimError::Config(format!("indicators: {e}")))?;

    let broker = if opts.transcript { Broker::with_transcript() } else { Broker::new() };
    let decision_timeout = Duration::from_millis(cfg.session.decision_timeout_ms);
    let mut engine = Engine::new(
        instrument.clone(),
        Arc::clone(&broker),
        accounts,
        evaluator,
        inputs.store.clone(),
        decision_timeout,
    )?;
    let mut hosted = Hosted::start(cfg, &broker, opts.launcher.as_deref())?;

    let session = engine
        .await_ready(Duration::from_secs(30).max(decision_timeout))
        .and_then(|()| match cfg.mode {
            Mode::CandleLevel => {
                let calendar = cfg.session.calendar.clone();
                engine
                    .run_candles(&inputs.bars, calendar, cfg.action_interval_ms(), &mut indicators)
                    .map(|()| inputs.bars.clone())
            }
            Mode::OrderLevel => engine.run_orders(
                &inputs.events,
                start,
                end,
                cfg.action_interval_ms(),
                &cfg.latency_model(),
                cfg.report.book_depth,
                &mut indicators,
            ),
        });
    let end_clock = engine.clock.max(end);
    engine.set_clock(end_clock);
    let ended = engine.publish(CONTROL_TOPIC, Payload::SessionEnd { sim_time: end_clock });
    let candles = match session.and_then(|c| ended.map(|()| c)) {
        Ok(c) => c,
        Err(e) => {
            hosted.abort();
            return Err(e);
        }
    };
    let agent_failures = hosted.join(host::idle_timeout(cfg));

    let series = engine.evaluator.series();
    let report = RunReport {
        symbol: instrument.symbol.clone(),
        mode: cfg.mode.as_str().into(),
        seed: cfg.seed,
        start,
        end: end_clock,
        decision_points: engine.decision_points,
        agents: engine.evaluator.agent_reports(&cfg.metrics, &MetricRegistry::new())?,
    };
    let data = ReportData {
        instrument: instrument.clone(),
        html_charts: cfg.report.html_charts,
        report: report.clone(),
        candles: candles.clone(),
        series: series.clone(),
    };
    let audit_lines = engine.audit.lines();
    let audit = std::mem::replace(&mut engine.audit, crate::agents::AuditLog::new(Vec::new()))
        .finish()
        .map_err(|e| SimError::Io(format!("audit log: {e}")))?;
    let outputs = RunOutputs {
        trade_log: engine.log.to_csv(&instrument),
        trades_csv: csv_text(|w| write_trades_csv(w, &series))?,
        equity_csv: csv_text(|w| write_equity_csv(w, &series))?,
        audit_jsonl: String::from_utf8(audit).map_err(|e| SimError::Io(e.to_string()))?,
        report_json: report_json(&report)?,
        report_html: render_html(&report, &candles, &instrument, &series, cfg.report.html_charts),
        report_data: serde_json::to_string(&data).map_err(|e| SimError::Io(e.to_string()))?,
        report,
    };
    Ok(RunOutcome {
        outputs,
        series,
        candles,
        log: engine.log.clone(),
        transcript: broker.take_transcript(),
        stats: RunStats {
            agents: roster.len(),
            decision_points: engine.decision_points,
            audit_lines,
            delivered: broker.delivered(),
            wall: started.elapsed(),
            agent_failures,
        },
    })
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<(), EvalError>) -> Result<String, SimError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SimError::Io(e.to_string()))
}

pub const OUTPUT_FILES: [&str; 7] = [
    "trade_log.csv",
    "trades.csv",
    "equity.csv",
    "audit.jsonl",
    "report.json",
    "report.html",
    "report_data.json",
];

/// Writes every run file into `dir`, creating it if needed.
pub fn write_outputs(outputs: &RunOutputs, dir: &Path) -> Result<(), SimError> {
    let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let contents = [
        &outputs.trade_log,
        &outputs.trades_csv,
        &outputs.equity_csv,
        &outputs.audit_jsonl,
        &outputs.report_json,
        &outputs.report_html,
        &outputs.report_data,
    ];
    for (name, text) in OUTPUT_FILES.iter().zip(contents) {
        std::fs::write(dir.join(name), text).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Html,
    Json,
}

/// Re-renders a finished run's report from its `report_data.json`.
pub fn render_saved(run_dir: &Path, format: ReportFormat) -> Result<String, SimError> {
    let path = run_dir.join("report_data.json");
    let text = std::fs::read_to_string(&path).map_err(|e| SimError::Data(format!("{}: {e}", path.display())))?;
    let data: ReportData =
        serde_json::from_str(&text).map_err(|e| SimError::Data(format!("{}: {e}", path.display())))?;
    Ok(match format {
        ReportFormat::Json => report_json(&data.report)?,
        ReportFormat::Html => render_html(&data.report, &data.candles, &data.instrument, &data.series, data.html_charts),
    })
}

/// Result of running one configuration several times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// Digest of trade log plus report per run.
    pub digests: Vec<u64>,
    pub identical: bool,
    /// False when the roster has agents the engine cannot make reproducible.
    pub deterministic_config: bool,
}

pub fn run_digest(outputs: &RunOutputs) -> u64 {
    let mut bytes = outputs.trade_log.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend_from_slice(outputs.report_json.as_bytes());
    fnv1a(&bytes)
}

pub fn verify(cfg: &RunConfig, runs: usize, opts: &RunOptions) -> Result<Verdict, SimError> {
    if runs < 2 {
        return Err(SimError::Config(format!("verify needs at least 2 runs, got {runs}")));
    }
    compare_runs(&vec![cfg.clone(); runs], opts)
}

/// Runs each configuration once and compares trade logs and reports byte
/// for byte. Handy for negative controls with different seeds.
pub fn compare_runs(cfgs: &[RunConfig], opts: &RunOptions) -> Result<Verdict, SimError> {
    let mut digests = Vec::new();
    let mut first: Option<RunOutputs> = None;
    let mut identical = true;
    for cfg in cfgs {
        let out = run(cfg, opts)?.outputs;
        digests.push(run_digest(&out));
        match &first {
            None => first = Some(out),
            Some(f) => identical &= f.trade_log == out.trade_log && f.report_json == out.report_json,
        }
    }
    Ok(Verdict {
        digests,
        identical,
        deterministic_config: cfgs.iter().all(RunConfig::is_deterministic),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub agents: usize,
    pub decision_points: u64,
    pub wall_ms: f64,
    pub per_agent_ms: f64,
    pub events: u64,
    pub events_per_sec: f64,
    /// Process high-water mark, so it only grows across rows.
    pub peak_rss_kb: Option<u64>,
}

fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Runs the configuration once per roster size, with the first agent group
/// resized to each count.
pub fn bench(cfg: &RunConfig, counts: &[usize], opts: &RunOptions) -> Result<Vec<BenchRow>, SimError> {
    if cfg.agents.is_empty() {
        return Err(SimError::Config("bench needs at least one agent group".into()));
    }
    if !cfg.agents[0].strategy.is_deterministic() {
        return Err(SimError::Config("bench only runs deterministic strategies".into()));
    }
    let mut rows = Vec::new();
    for &n in counts {
        let mut c = cfg.clone();
        c.agents.truncate(1);
        c.agents[0].count = n.max(1);
        let out = run(&c, opts)?;
        let wall_ms = out.stats.wall.as_secs_f64() * 1e3;
        rows.push(BenchRow {
            agents: out.stats.agents,
            decision_points: out.stats.decision_points,
            wall_ms,
            per_agent_ms: wall_ms / out.stats.agents as f64,
            events: out.stats.delivered,
            events_per_sec: out.stats.delivered as f64 / out.stats.wall.as_secs_f64().max(1e-9),
            peak_rss_kb: peak_rss_kb(),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| SimError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Io(e.to_string()))
}
