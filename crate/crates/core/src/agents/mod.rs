//! Agent-side logic: accounting, order constraints, strategies, and the loop
//! that runs a strategy against the bus.

mod account;
mod audit;
mod constraints;
mod context;
mod portfolio;
pub mod provider;
mod runtime;
mod strategy;

use thiserror::Error;

use crate::bus::BusError;

pub use account::{Account, Outstanding};
pub use audit::{read_audit, AuditLog, DecisionRecord};
pub use constraints::{
    enforce_constraints, parse_actions, ActionKind, ActionRequest, Approved, Commitments, ConstraintReject,
};
pub use context::{AgentView, ConstraintSummary, DecisionContext, OpenOrder};
pub use portfolio::{FillEffect, PortfolioSnapshot, PortfolioState};
pub use provider::{ExternalProvider, ProviderConfig, ProviderFault};
pub use runtime::{agent_order_id, AgentOutcome, AgentRuntime, AgentSetup};
pub use strategy::{BuyAndHold, Decision, MaCrossover, RandomTrader, Strategy, StrategySpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("BAD_WINDOWS: fast window {fast} must be positive and shorter than slow window {slow}")]
    BadWindows { fast: usize, slow: usize },
    #[error("provider configuration: {0}")]
    ProviderConfig(String),
    #[error("cannot start provider: {0}")]
    ProviderSpawn(String),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("no message from the engine for {0} ms")]
    EngineSilent(u64),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::BadWindows { .. } => "BAD_WINDOWS",
            AgentError::ProviderConfig(_) => "PROVIDER_CONFIG",
            AgentError::ProviderSpawn(_) => "PROVIDER_SPAWN",
            AgentError::Bus(BusError::Disconnected) => "DISCONNECTED",
            AgentError::Bus(_) => "BUS",
            AgentError::EngineSilent(_) => "ENGINE_SILENT",
            AgentError::Protocol(_) => "PROTOCOL",
        }
    }
}
