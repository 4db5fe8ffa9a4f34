//! Message contract between the engine and agents, with an in-process broker
//! and a TCP transport that carry the same envelopes.

mod broker;
mod message;
mod tcp;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::domain::SimTime;

pub use broker::{Broker, BrokerConnection, Deduper, Pattern, TranscriptEntry};
pub use message::{
    canonical_json, exec_topic, external_topic, market_topic, BarData, BookTopData, Envelope, ExecStatus,
    ExecutionReport, FillReport, MarketData, Payload, PortfolioUpdate, Quote, QuoteSource, CONTROL_TOPIC,
    ENGINE_ID, ENGINE_TOPIC,
};
pub use tcp::{read_frame, write_frame, Frame, TcpConnection, TcpServer, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("DISCONNECTED")]
    Disconnected,
    #[error("transport i/o: {0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// A session on the bus. Sequencing and dedupe happen inside the connection.
pub trait Connection: Send {
    fn name(&self) -> &str;
    fn subscribe(&mut self, pattern: &str) -> Result<(), BusError>;
    /// Returns the sequence number assigned to the message.
    fn publish(&mut self, topic: &str, sim_time: SimTime, payload: Payload) -> Result<u64, BusError>;
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Arc<Envelope>>, BusError>;
}

/// A delivery whose payload describes a time later than the engine clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadViolation {
    pub recipient: String,
    pub engine_clock: SimTime,
    pub payload_time: SimTime,
    pub topic: String,
    pub seq: u64,
}

/// Scans a transcript for deliveries that would leak the future to an agent.
pub fn audit_lookahead(transcript: &[TranscriptEntry]) -> Vec<LookaheadViolation> {
    transcript
        .iter()
        .filter_map(|entry| {
            let t = entry.envelope.payload.payload_time()?;
            let stamp_ahead = entry.envelope.sim_time > entry.engine_clock;
            (t > entry.engine_clock || stamp_ahead).then(|| LookaheadViolation {
                recipient: entry.recipient.clone(),
                engine_clock: entry.engine_clock,
                payload_time: t.max(entry.envelope.sim_time),
                topic: entry.envelope.topic.clone(),
                seq: entry.envelope.seq,
            })
        })
        .collect()
}
