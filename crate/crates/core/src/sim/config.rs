use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::StrategySpec;
use crate::candles::SessionCalendar;
use crate::data::{AdapterRegistry, LobsterOptions, StreamKind};
use crate::domain::{AgentId, Instrument, Timeframe};
use crate::evaluator::MetricConfig;
use crate::indicators::IndicatorConfig;
use crate::matching::{LatencyMode, LatencyModel};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CandleLevel,
    OrderLevel,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::CandleLevel => "candle_level",
            Mode::OrderLevel => "order_level",
        }
    }
}

/// One input file and the adapter that reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub adapter: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Bar length in candle mode; bar aggregation window in order mode.
    pub timeframe_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bars: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fundamentals: Option<Source>,
    #[serde(default)]
    pub lobster: LobsterOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Inclusive; defaults to the first record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<u64>,
    /// Exclusive; defaults to the end of the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
    /// Defaults to the timeframe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_interval_ms: Option<u64>,
    #[serde(default)]
    pub calendar: SessionCalendar,
    /// Wall-clock wait for an agent's decision before the tick moves on.
    #[serde(default = "default_decision_timeout")]
    pub decision_timeout_ms: u64,
}

fn default_decision_timeout() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub mode: LatencyMode,
    #[serde(default)]
    pub base_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            mode: LatencyMode::Fixed,
            base_ms: 0,
            jitter_ms: 0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub kind: TransportKind,
    /// Listen address for the TCP transport; port 0 picks a free one.
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Run each agent as its own OS process (TCP only).
    #[serde(default)]
    pub processes: bool,
}

fn default_bind() -> String {
    "127.0.0.1:0".into()
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            kind: TransportKind::InProcess,
            bind: default_bind(),
            processes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Agents that get a price and equity chart in report.html.
    #[serde(default = "default_charts")]
    pub html_charts: usize,
    /// Levels per side in book snapshots sent to agents.
    #[serde(default = "default_depth")]
    pub book_depth: usize,
}

fn default_charts() -> usize {
    8
}

fn default_depth() -> usize {
    5
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            html_charts: default_charts(),
            book_depth: default_depth(),
        }
    }
}

/// A roster entry. `count > 1` expands to ids `<id>-000`, `<id>-001`, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentGroup {
    pub id: String,
    #[serde(default = "one")]
    pub count: usize,
    pub cash: f64,
    #[serde(default = "default_history")]
    pub history: usize,
    pub strategy: StrategySpec,
}

fn one() -> usize {
    1
}

fn default_history() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub instrument: Instrument,
    pub data: DataConfig,
    pub session: SessionConfig,
    #[serde(default)]
    pub latency: LatencyConfig,
    #[serde(default)]
    pub indicators: IndicatorConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub report: ReportConfig,
    pub agents: Vec<AgentGroup>,
    /// Directory relative paths resolve against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// One expanded roster slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSlot {
    pub agent_id: AgentId,
    pub roster_index: u32,
    pub cash: f64,
    pub history: usize,
    pub strategy: StrategySpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Reads and validates a config file; relative data paths are taken from
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate(&AdapterRegistry::with_builtins())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn timeframe(&self) -> Timeframe {
        Timeframe(self.data.timeframe_ms)
    }

    pub fn action_interval_ms(&self) -> u64 {
        self.session.action_interval_ms.unwrap_or(self.data.timeframe_ms)
    }

    pub fn latency_model(&self) -> LatencyModel {
        let l = &self.latency;
        LatencyModel {
            mode: l.mode,
            base_ms: l.base_ms,
            jitter_ms: l.jitter_ms,
            seed: l.seed.unwrap_or(self.seed),
        }
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self, adapters: &AdapterRegistry) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.instrument
            .check()
            .map_err(|e| SimError::Config(format!("instrument: {e}")))?;
        if self.data.timeframe_ms == 0 {
            return bad("data.timeframe_ms must be positive".into());
        }
        if self.action_interval_ms() == 0 {
            return bad("session.action_interval_ms must be positive".into());
        }
        if let (Some(s), Some(e)) = (self.session.start_ms, self.session.end_ms) {
            if s >= e {
                return bad(format!("session.start_ms {s} must be before end_ms {e}"));
            }
        }
        if self.mode == Mode::OrderLevel && self.session.start_ms.is_none() {
            return bad("order_level runs need session.start_ms".into());
        }
        let required = match self.mode {
            Mode::CandleLevel => ("bars", self.data.bars.as_ref()),
            Mode::OrderLevel => ("events", self.data.events.as_ref()),
        };
        if required.1.is_none() {
            return bad(format!("{} runs need data.{}", self.mode.as_str(), required.0));
        }
        let streams = [
            ("bars", &self.data.bars, StreamKind::Bars),
            ("events", &self.data.events, StreamKind::OrderEvents),
            ("news", &self.data.news, StreamKind::News),
            ("fundamentals", &self.data.fundamentals, StreamKind::Fundamentals),
        ];
        for (name, source, kind) in streams {
            let Some(source) = source else { continue };
            match adapters.get(&source.adapter) {
                None => return bad(format!("data.{name}: UNKNOWN_PROVIDER {}", source.adapter)),
                Some(a) if a.yields != kind => {
                    return bad(format!("data.{name}: adapter {} does not read {kind:?}", source.adapter))
                }
                Some(_) => {}
            }
        }
        self.indicators
            .validate()
            .map_err(|e| SimError::Config(format!("indicators: {e}")))?;
        if !(self.metrics.periods_per_year > 0.0) {
            return bad("metrics.periods_per_year must be positive".into());
        }
        if self.transport.processes && self.transport.kind != TransportKind::Tcp {
            return bad("transport.processes needs transport.kind = \"tcp\"".into());
        }
        if self.agents.is_empty() {
            return bad("the roster is empty".into());
        }
        let mut seen = BTreeSet::new();
        for group in &self.agents {
            if group.count == 0 {
                return bad(format!("agent {}: count must be at least 1", group.id));
            }
            if !(group.cash.is_finite() && group.cash >= 0.0) {
                return bad(format!("agent {}: cash must be finite and non-negative", group.id));
            }
            group
                .strategy
                .validate()
                .map_err(|e| SimError::Config(format!("agent {}: {e}", group.id)))?;
        }
        for slot in self.roster() {
            let id = slot.agent_id.as_str();
            let id_ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_".contains(c));
            if !id_ok {
                return bad(format!("agent id {id:?} may only use letters, digits, '-' and '_'"));
            }
            if id == crate::bus::ENGINE_ID || !seen.insert(id.to_string()) {
                return bad(format!("agent id {id:?} is reserved or repeated"));
            }
        }
        Ok(())
    }

    /// The roster with groups expanded, in configuration order.
    pub fn roster(&self) -> Vec<AgentSlot> {
        let mut out = Vec::new();
        for group in &self.agents {
            for i in 0..group.count {
                let agent_id = if group.count == 1 {
                    group.id.clone()
                } else {
                    format!("{}-{i:03}", group.id)
                };
                out.push(AgentSlot {
                    agent_id: AgentId::new(agent_id),
                    roster_index: out.len() as u32,
                    cash: group.cash,
                    history: group.history,
                    strategy: group.strategy.clone(),
                });
            }
        }
        out
    }

    pub fn is_deterministic(&self) -> bool {
        self.agents.iter().all(|g| g.strategy.is_deterministic())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
mode = "candle_level"

[instrument]
symbol = "ACME"
asset_class = "equity"

[data]
timeframe_ms = 86400000
bars = { adapter = "ohlcv_csv", path = "bars.csv" }

[session]
calendar = { kind = "per_bar" }

[[agents]]
id = "ma"
count = 3
cash = 10000.0
strategy = { kind = "ma_crossover", fast = 3, slow = 8 }

[[agents]]
id = "hold"
cash = 5000.0
strategy = { kind = "buy_and_hold" }
"#;

    #[test]
    fn parses_and_expands_roster() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.validate(&AdapterRegistry::with_builtins()).unwrap();
        let ids: Vec<String> = cfg.roster().into_iter().map(|s| s.agent_id.0).collect();
        assert_eq!(ids, ["ma-000", "ma-001", "ma-002", "hold"]);
        assert_eq!(cfg.action_interval_ms(), 86_400_000);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let once = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml(&once).unwrap().to_toml().unwrap();
        assert_eq!(once, again);
        assert_eq!(RunConfig::from_toml(&once).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_and_missing_seed_are_rejected() {
        let typo = SAMPLE.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(RunConfig::from_toml(&typo).is_err());
        let unseeded = SAMPLE.replace("seed = 7", "");
        let err = RunConfig::from_toml(&unseeded).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn unknown_adapter_fails_validation() {
        let cfg = RunConfig::from_toml(&SAMPLE.replace("\"ohlcv_csv\"", "\"yahoo\"")).unwrap();
        let err = cfg.validate(&AdapterRegistry::with_builtins()).unwrap_err();
        assert!(err.to_string().contains("UNKNOWN_PROVIDER"));
    }

    #[test]
    fn bad_windows_fail_validation() {
        let cfg = RunConfig::from_toml(&SAMPLE.replace("fast = 3", "fast = 9")).unwrap();
        let err = cfg.validate(&AdapterRegistry::with_builtins()).unwrap_err();
        assert!(err.to_string().contains("BAD_WINDOWS"));
    }
}
