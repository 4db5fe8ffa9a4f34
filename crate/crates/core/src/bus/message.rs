use serde::{Deserialize, Serialize};

use crate::agents::{ActionKind, DecisionRecord, PortfolioSnapshot};
use crate::data::{DataQuery, ExternalData, QueryError};
use crate::domain::{AgentId, Counterparty, Liquidity, Order, OrderId, SimTime, Timeframe};
use crate::indicators::IndicatorFrame;

/// One message on the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: String,
    pub sender: String,
    /// Per-sender counter starting at 1, gapless on one connection.
    pub seq: u64,
    /// Sender's clock when the message was published.
    pub sim_time: SimTime,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "body")]
pub enum Payload {
    OrderSubmit { order: Order, action: ActionKind },
    OrderCancel { order_id: OrderId, agent_id: AgentId },
    ExecutionReport(ExecutionReport),
    PortfolioUpdate(PortfolioUpdate),
    MarketData(MarketData),
    ExternalData(ExternalData),
    DataRequest { request_id: u64, query: DataQuery },
    DataResponse { request_id: u64, result: Result<ExternalData, QueryError> },
    TimeTick { sim_time: SimTime, market_open: bool },
    /// Closes an agent's turn at a tick and carries its decision for the audit log.
    TickAck(DecisionRecord),
    AgentReady { agent_id: AgentId },
    SessionEnd { sim_time: SimTime },
}

impl Payload {
    /// The latest simulation time the payload's contents describe.
    pub fn payload_time(&self) -> Option<SimTime> {
        match self {
            Payload::ExecutionReport(r) => r.fills.iter().map(|f| f.exec_time).chain([r.sim_time]).max(),
            Payload::PortfolioUpdate(p) => Some(p.as_of),
            Payload::MarketData(m) => Some(m.as_of()),
            Payload::ExternalData(d) => d.latest_time(),
            Payload::DataResponse { result, .. } => result.as_ref().ok().and_then(ExternalData::latest_time),
            Payload::TimeTick { sim_time, .. } | Payload::SessionEnd { sim_time } => Some(*sim_time),
            Payload::TickAck(d) => Some(d.sim_time),
            Payload::OrderSubmit { order, .. } => Some(order.submit_time),
            Payload::OrderCancel { .. } | Payload::DataRequest { .. } | Payload::AgentReady { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Accepted,
    Filled,
    Partial,
    Rejected,
    Canceled,
    SessionExpired,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Accepted => "accepted",
            ExecStatus::Filled => "filled",
            ExecStatus::Partial => "partial",
            ExecStatus::Rejected => "rejected",
            ExecStatus::Canceled => "canceled",
            ExecStatus::SessionExpired => "session_expired",
        }
    }

    /// No more fills will follow. `Partial` means the remainder is still working.
    pub fn is_final(self) -> bool {
        !matches!(self, ExecStatus::Accepted | ExecStatus::Partial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    pub price: f64,
    pub quantity: u64,
    pub exec_time: SimTime,
    pub liquidity: Liquidity,
    pub counterparty: Counterparty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub action: ActionKind,
    pub status: ExecStatus,
    pub fills: Vec<FillReport>,
    /// Lots still working after this report.
    pub remaining_qty: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub sim_time: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioUpdate {
    pub agent_id: AgentId,
    pub as_of: SimTime,
    pub portfolio: PortfolioSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarData {
    pub symbol: String,
    pub bar_start: SimTime,
    pub timeframe: Timeframe,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl BarData {
    pub fn end(&self) -> SimTime {
        self.bar_start + self.timeframe.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookTopData {
    pub symbol: String,
    pub as_of: SimTime,
    /// `(price, quantity)` best first.
    pub bids: Vec<(f64, u64)>,
    pub asks: Vec<(f64, u64)>,
    pub last_trade: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuoteSource {
    Open,
    LastTrade,
    Mid,
}

/// Reference price agents size orders against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub symbol: String,
    pub as_of: SimTime,
    pub price: f64,
    pub source: QuoteSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "data")]
#[allow(clippy::large_enum_variant)]
pub enum MarketData {
    Bar(BarData),
    BookTop(BookTopData),
    Indicators { symbol: String, frame: IndicatorFrame<f64> },
    Quote(Quote),
}

impl MarketData {
    pub fn as_of(&self) -> SimTime {
        match self {
            MarketData::Bar(b) => b.end(),
            MarketData::BookTop(b) => b.as_of,
            MarketData::Indicators { frame, .. } => frame.as_of,
            MarketData::Quote(q) => q.as_of,
        }
    }
}

/// Serializes with object keys in sorted order, so equal values give equal bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let tree = serde_json::to_value(value)?;
    serde_json::to_string(&tree)
}

pub fn market_topic(symbol: &str) -> String {
    format!("market.{symbol}")
}

pub fn exec_topic(agent: &str) -> String {
    format!("exec.{agent}")
}

pub fn external_topic(symbol: &str) -> String {
    format!("external.{symbol}")
}

pub const CONTROL_TOPIC: &str = "control";
/// Agents publish orders, requests and acks here.
pub const ENGINE_TOPIC: &str = "engine";
pub const ENGINE_ID: &str = "engine";
