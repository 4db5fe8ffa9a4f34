//! Trade ledger, equity tracking, performance metrics and report exports.

mod export;
mod ledger;
mod metrics;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bus::ExecutionReport;
use crate::domain::{Instrument, Side, SimTime};

pub use export::{render_html, report_json, write_equity_csv, write_trades_csv, AgentReport, AgentSeries, RunReport};
pub use ledger::{Direction, FillRecord, Ledger, TradeRecord};
pub use metrics::{
    compute_metrics, max_drawdown, period_returns, sample_std, sharpe, sortino, EquityPoint, MetricConfig, MetricFn,
    MetricInput, MetricRegistry, MetricsReport, BUILTIN_METRICS, PROFIT_FACTOR_NO_LOSSES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("OUT_OF_ORDER: record at {at} after {last}")]
    OutOfOrder { at: SimTime, last: SimTime },
    #[error("NO_EQUITY: equity series is empty")]
    NoEquity,
    #[error("DUPLICATE_METRIC: {0}")]
    DuplicateMetric(String),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("export failed: {0}")]
    Export(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::OutOfOrder { .. } => "OUT_OF_ORDER",
            EvalError::NoEquity => "NO_EQUITY",
            EvalError::DuplicateMetric(_) => "DUPLICATE_METRIC",
            EvalError::UnknownAgent(_) => "UNKNOWN_AGENT",
            EvalError::Export(_) => "EXPORT",
        }
    }
}

#[derive(Debug, Clone)]
struct Track {
    strategy: String,
    initial_cash: f64,
    /// Prices in ticks, like the engine's accounts.
    ledger: Ledger<f64>,
    equity: Vec<EquityPoint>,
}

/// Collects every agent's executions and equity during a run.
#[derive(Debug, Clone)]
pub struct Evaluator {
    instrument: Instrument,
    agents: BTreeMap<String, Track>,
}

impl Evaluator {
    pub fn new(instrument: Instrument) -> Self {
        Evaluator {
            instrument,
            agents: BTreeMap::new(),
        }
    }

    /// Registers an agent; its equity series starts at `initial_cash` at `start`.
    pub fn add_agent(&mut self, agent_id: &str, strategy: &str, initial_cash: f64, start: SimTime) {
        self.agents.insert(
            agent_id.to_string(),
            Track {
                strategy: strategy.to_string(),
                initial_cash,
                ledger: Ledger::new(),
                equity: vec![EquityPoint {
                    sim_time: start,
                    value: initial_cash,
                }],
            },
        );
    }

    fn track(&mut self, agent_id: &str) -> Result<&mut Track, EvalError> {
        self.agents
            .get_mut(agent_id)
            .ok_or_else(|| EvalError::UnknownAgent(agent_id.to_string()))
    }

    /// Adds the fills carried by an execution report.
    pub fn on_report(&mut self, report: &ExecutionReport, note: Option<&str>) -> Result<(), EvalError> {
        let side = report.action.side();
        let to_ticks = |p: f64| self.instrument.value_to_ticks(p).round();
        let fills: Vec<FillRecord<f64>> = report
            .fills
            .iter()
            .map(|f| FillRecord {
                time: f.exec_time,
                side,
                qty: f.quantity,
                price: to_ticks(f.price),
                note: note.map(str::to_string),
            })
            .collect();
        let track = self.track(report.agent_id.as_str())?;
        for f in fills {
            track.ledger.record_fill(f)?;
        }
        Ok(())
    }

    pub fn record_fill(&mut self, agent_id: &str, time: SimTime, side: Side, qty: u64, price_ticks: f64) -> Result<(), EvalError> {
        self.track(agent_id)?.ledger.record_fill(FillRecord {
            time,
            side,
            qty,
            price: price_ticks,
            note: None,
        })
    }

    /// Appends an equity sample in currency. A sample at the same time as the
    /// previous one replaces it.
    pub fn record_equity(&mut self, agent_id: &str, time: SimTime, value: f64) -> Result<(), EvalError> {
        let track = self.track(agent_id)?;
        match track.equity.last_mut() {
            Some(last) if last.sim_time == time => last.value = value,
            Some(last) if last.sim_time > time => {
                return Err(EvalError::OutOfOrder {
                    at: time,
                    last: last.sim_time,
                })
            }
            _ => track.equity.push(EquityPoint { sim_time: time, value }),
        }
        Ok(())
    }

    /// Realized P&L in ticks, for reconciliation with the accounts.
    pub fn realized_ticks(&self, agent_id: &str) -> Option<f64> {
        self.agents.get(agent_id).map(|t| t.ledger.realized_pnl())
    }

    pub fn series(&self) -> Vec<AgentSeries> {
        let inst = &self.instrument;
        self.agents
            .iter()
            .map(|(id, t)| AgentSeries {
                agent_id: id.clone(),
                trades: t.ledger.trades().iter().map(|r| r.map(|v| inst.ticks_to_value(v))).collect(),
                equity: t.equity.clone(),
            })
            .collect()
    }

    pub fn agent_reports(&self, config: &MetricConfig, registry: &MetricRegistry) -> Result<Vec<AgentReport>, EvalError> {
        let inst = &self.instrument;
        self.agents
            .iter()
            .map(|(id, t)| {
                let trades: Vec<TradeRecord<f64>> =
                    t.ledger.trades().iter().map(|r| r.map(|v| inst.ticks_to_value(v))).collect();
                let fills: Vec<FillRecord<f64>> =
                    t.ledger.fills().iter().map(|f| f.map(|v| inst.ticks_to_value(v))).collect();
                Ok(AgentReport {
                    agent_id: id.clone(),
                    strategy: t.strategy.clone(),
                    initial_cash: t.initial_cash,
                    metrics: compute_metrics(&trades, &fills, &t.equity, config, registry)?,
                })
            })
            .collect()
    }
}
