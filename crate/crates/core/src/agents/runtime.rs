use std::collections::BTreeSet;
use std::time::Duration;

use crate::bus::{Connection, Envelope, Payload, CONTROL_TOPIC, ENGINE_TOPIC};
use crate::bus::{exec_topic, external_topic, market_topic};
use crate::domain::{AgentId, Instrument, OrderId, SimTime};

use super::strategy::{Decision, Strategy};
use super::{AgentError, AgentView, DecisionRecord};

/// Order ids minted by agents: high bit set, then the roster slot, then a counter.
pub fn agent_order_id(roster_index: u32, counter: u64) -> OrderId {
    OrderId(1 << 63 | u64::from(roster_index) << 40 | (counter & ((1 << 40) - 1)))
}

#[derive(Debug, Clone)]
pub struct AgentSetup {
    pub agent_id: AgentId,
    pub roster_index: u32,
    pub instrument: Instrument,
    pub action_interval_ms: u64,
    /// Bars and news items kept for the decision context.
    pub history: usize,
    /// Give up when the engine is silent this long.
    pub idle_timeout: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentOutcome {
    pub decisions: u64,
    pub orders: u64,
}

/// Drives one strategy over a bus connection until the session ends.
pub struct AgentRuntime<C: Connection> {
    setup: AgentSetup,
    conn: C,
    strategy: Box<dyn Strategy>,
    view: AgentView,
    orders: u64,
    requests: u64,
    outcome: AgentOutcome,
}

enum Flow {
    Continue,
    Tick { sim_time: SimTime, market_open: bool },
    End,
}

impl<C: Connection> AgentRuntime<C> {
    pub fn new(setup: AgentSetup, conn: C, strategy: Box<dyn Strategy>) -> Self {
        let view = AgentView::new(setup.agent_id.as_str(), setup.instrument.clone(), setup.history);
        AgentRuntime {
            setup,
            conn,
            strategy,
            view,
            orders: 0,
            requests: 0,
            outcome: AgentOutcome::default(),
        }
    }

    pub fn run(mut self) -> Result<AgentOutcome, AgentError> {
        let id = self.setup.agent_id.clone();
        let symbol = self.setup.instrument.symbol.clone();
        for topic in [market_topic(&symbol), exec_topic(id.as_str()), external_topic(&symbol), CONTROL_TOPIC.to_string()] {
            self.conn.subscribe(&topic)?;
        }
        self.conn
            .publish(ENGINE_TOPIC, SimTime::ZERO, Payload::AgentReady { agent_id: id })?;
        loop {
            let env = self.next()?;
            match self.absorb(&env) {
                Flow::Continue => {}
                Flow::End => return Ok(self.outcome),
                Flow::Tick { sim_time, market_open } => self.take_turn(sim_time, market_open)?,
            }
        }
    }

    fn next(&mut self) -> Result<std::sync::Arc<Envelope>, AgentError> {
        self.conn
            .recv_timeout(self.setup.idle_timeout)?
            .ok_or(AgentError::EngineSilent(self.setup.idle_timeout.as_millis() as u64))
    }

    fn absorb(&mut self, env: &Envelope) -> Flow {
        match &env.payload {
            Payload::MarketData(m) => {
                self.view.on_market_data(m);
                self.strategy.on_market_data(m);
            }
            Payload::ExternalData(d) => {
                self.view.on_external_data(d);
                self.strategy.on_external_data(d);
            }
            Payload::ExecutionReport(r) if r.agent_id == self.setup.agent_id => {
                self.view.on_execution(r);
                self.strategy.on_execution(r);
            }
            Payload::PortfolioUpdate(p) if p.agent_id == self.setup.agent_id => self.view.on_portfolio(p),
            Payload::DataResponse { request_id, result } => match result {
                Ok(data) => {
                    self.view.on_external_data(data);
                    self.strategy.on_external_data(data);
                }
                Err(e) => log::warn!("{}: data request {request_id} failed: {e}", self.setup.agent_id),
            },
            Payload::TimeTick { sim_time, market_open } => {
                return Flow::Tick {
                    sim_time: *sim_time,
                    market_open: *market_open,
                }
            }
            Payload::SessionEnd { .. } => return Flow::End,
            _ => {}
        }
        Flow::Continue
    }

    fn take_turn(&mut self, now: SimTime, market_open: bool) -> Result<(), AgentError> {
        let queries = self.strategy.data_requests(now);
        let mut waiting = BTreeSet::new();
        for query in queries {
            self.requests += 1;
            waiting.insert(self.requests);
            self.conn.publish(
                ENGINE_TOPIC,
                now,
                Payload::DataRequest {
                    request_id: self.requests,
                    query,
                },
            )?;
        }
        while !waiting.is_empty() {
            let env = self.next()?;
            if let Payload::DataResponse { request_id, .. } = &env.payload {
                waiting.remove(request_id);
            }
            if let Flow::End = self.absorb(&env) {
                return Err(AgentError::Protocol("session ended during a data request".into()));
            }
        }

        let ctx = self.view.context(now, self.setup.action_interval_ms, market_open);
        let Decision { actions, explanation } = self.strategy.decide(&ctx);
        for action in &actions {
            self.orders += 1;
            let order_id = agent_order_id(self.setup.roster_index, self.orders);
            let order = action.to_order(order_id, self.setup.agent_id.clone(), &self.setup.instrument.symbol, now);
            self.view.on_submitted(order_id, action);
            self.conn.publish(
                ENGINE_TOPIC,
                now,
                Payload::OrderSubmit {
                    order,
                    action: action.action,
                },
            )?;
        }
        self.outcome.decisions += 1;
        self.outcome.orders += actions.len() as u64;
        let record = DecisionRecord {
            agent_id: self.setup.agent_id.clone(),
            sim_time: now,
            actions,
            explanation,
        };
        self.conn.publish(ENGINE_TOPIC, now, Payload::TickAck(record))?;
        Ok(())
    }
}
