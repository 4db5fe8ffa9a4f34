//! State and helpers shared by both execution modes: accounts, reports,
//! the decision barrier, and the run records.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::agents::{Account, ActionKind, AuditLog, DecisionRecord, PortfolioSnapshot};
use crate::bus::{
    exec_topic, BrokerConnection, Connection, Envelope, ExecStatus, ExecutionReport, FillReport, Payload,
    PortfolioUpdate, CONTROL_TOPIC, ENGINE_TOPIC,
};
use crate::bus::Broker;
use crate::data::ExternalStore;
use crate::domain::{
    validate_order, AgentId, Counterparty, Instrument, Liquidity, OrderId, OrderType, Price,
    PricedOrder, SimTime,
};
use crate::evaluator::Evaluator;

use super::tradelog::{LogEvent, LogRow, TradeLog};
use super::SimError;

/// An accepted agent order that has not reached a final status.
#[derive(Debug, Clone)]
pub(super) struct LiveOrder {
    pub agent: AgentId,
    pub action: ActionKind,
    pub order_type: OrderType,
    pub level: Option<Price>,
}

/// An order that passed validation and the account checks.
#[derive(Debug, Clone)]
pub(super) struct Admitted {
    pub order: PricedOrder,
    /// Cash held back for it, in ticks.
    pub reserve: f64,
}

pub(super) struct Engine {
    pub instrument: Instrument,
    pub broker: Arc<Broker>,
    pub conn: BrokerConnection,
    pub roster: Vec<AgentId>,
    pub accounts: BTreeMap<AgentId, Account>,
    pub live: BTreeMap<OrderId, LiveOrder>,
    seen: BTreeSet<OrderId>,
    /// Action of every order ever accepted, for answering late cancels.
    actions: BTreeMap<OrderId, ActionKind>,
    pub evaluator: Evaluator,
    pub log: TradeLog,
    pub audit: AuditLog<Vec<u8>>,
    pub store: ExternalStore,
    pub decision_timeout: Duration,
    pub decision_points: u64,
    pub clock: SimTime,
    /// Price used to value positions in portfolio snapshots and equity.
    pub mark: Option<Price>,
    deferred: Vec<ExecutionReport>,
    dirty: BTreeSet<AgentId>,
}

impl Engine {
    pub fn new(
        instrument: Instrument,
        broker: Arc<Broker>,
        accounts: BTreeMap<AgentId, Account>,
        evaluator: Evaluator,
        store: ExternalStore,
        decision_timeout: Duration,
    ) -> Result<Self, SimError> {
        let mut conn = BrokerConnection::connect(&broker, crate::bus::ENGINE_ID);
        conn.subscribe(ENGINE_TOPIC)?;
        Ok(Engine {
            instrument,
            broker,
            conn,
            roster: accounts.keys().cloned().collect(),
            accounts,
            live: BTreeMap::new(),
            seen: BTreeSet::new(),
            actions: BTreeMap::new(),
            evaluator,
            log: TradeLog::default(),
            audit: AuditLog::new(Vec::new()),
            store,
            decision_timeout,
            decision_points: 0,
            clock: SimTime::ZERO,
            mark: None,
            deferred: Vec::new(),
            dirty: BTreeSet::new(),
        })
    }

    pub fn set_clock(&mut self, now: SimTime) {
        debug_assert!(now >= self.clock, "engine clock moved backwards");
        self.clock = now;
        self.broker.set_clock(now);
    }

    pub fn publish(&mut self, topic: &str, payload: Payload) -> Result<(), SimError> {
        self.conn.publish(topic, self.clock, payload)?;
        Ok(())
    }

    /// Blocks until every agent announced itself.
    pub fn await_ready(&mut self, timeout: Duration) -> Result<(), SimError> {
        let mut waiting: BTreeSet<AgentId> = self.roster.iter().cloned().collect();
        let deadline = Instant::now() + timeout;
        while !waiting.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(env) = self.conn.recv_timeout(left)? else {
                let missing: Vec<&str> = waiting.iter().map(AgentId::as_str).take(5).collect();
                return Err(SimError::Runtime(format!(
                    "{} agent(s) never connected, e.g. {}",
                    waiting.len(),
                    missing.join(", ")
                )));
            };
            if let Payload::AgentReady { agent_id } = &env.payload {
                if agent_id.as_str() == env.sender {
                    waiting.remove(agent_id);
                }
            }
        }
        Ok(())
    }

    fn snapshot(&self, agent: &AgentId) -> PortfolioSnapshot {
        let account = &self.accounts[agent];
        PortfolioSnapshot::from_ticks(
            &account.portfolio,
            account.commitments().reserved_cash,
            self.mark.map(|p| p.0 as f64),
            &self.instrument,
        )
    }

    /// Sends every agent its portfolio, e.g. at session start.
    pub fn broadcast_portfolios(&mut self) -> Result<(), SimError> {
        self.dirty.extend(self.roster.iter().cloned());
        self.flush_portfolios()
    }

    pub fn flush_portfolios(&mut self) -> Result<(), SimError> {
        for agent in std::mem::take(&mut self.dirty) {
            let update = PortfolioUpdate {
                portfolio: self.snapshot(&agent),
                agent_id: agent.clone(),
                as_of: self.clock,
            };
            self.publish(&exec_topic(agent.as_str()), Payload::PortfolioUpdate(update))?;
        }
        Ok(())
    }

    /// Publishes reports held back until their fills lie in the past.
    pub fn flush_deferred(&mut self) -> Result<(), SimError> {
        for mut report in std::mem::take(&mut self.deferred) {
            report.sim_time = self.clock;
            let topic = exec_topic(report.agent_id.as_str());
            self.publish(&topic, Payload::ExecutionReport(report))?;
        }
        self.flush_portfolios()
    }

    #[allow(clippy::too_many_arguments)]
    fn send_report(
        &mut self,
        order_id: OrderId,
        agent: AgentId,
        action: ActionKind,
        status: ExecStatus,
        fills: Vec<FillReport>,
        remaining: u64,
        reason: Option<String>,
        defer: bool,
    ) -> Result<(), SimError> {
        let report = ExecutionReport {
            order_id,
            agent_id: agent,
            action,
            status,
            fills,
            remaining_qty: remaining,
            reason,
            sim_time: self.clock,
        };
        if defer {
            self.deferred.push(report);
            Ok(())
        } else {
            let topic = exec_topic(report.agent_id.as_str());
            self.publish(&topic, Payload::ExecutionReport(report))
        }
    }

    /// Publishes a tick, waits for every agent's turn, answers data requests
    /// on the way, and returns the order traffic in processing order.
    pub fn barrier(&mut self, market_open: bool) -> Result<Vec<Arc<Envelope>>, SimError> {
        let now = self.clock;
        self.decision_points += 1;
        self.publish(CONTROL_TOPIC, Payload::TimeTick { sim_time: now, market_open })?;
        let mut waiting: BTreeSet<AgentId> = self.roster.iter().cloned().collect();
        let mut records: BTreeMap<AgentId, DecisionRecord> = BTreeMap::new();
        let mut orders = Vec::new();
        let deadline = Instant::now() + self.decision_timeout;
        while !waiting.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            let Some(env) = self.conn.recv_timeout(left)? else { break };
            let sender = AgentId::new(env.sender.as_str());
            if !self.accounts.contains_key(&sender) {
                log::warn!("message from unknown sender {}", env.sender);
                continue;
            }
            match &env.payload {
                Payload::DataRequest { request_id, query } => {
                    let result = self.store.query(query, now);
                    let reply = Payload::DataResponse {
                        request_id: *request_id,
                        result,
                    };
                    self.publish(&exec_topic(sender.as_str()), reply)?;
                }
                Payload::TickAck(record) if env.sim_time == now && record.agent_id == sender => {
                    waiting.remove(&sender);
                    records.insert(sender, record.clone());
                }
                Payload::OrderSubmit { .. } | Payload::OrderCancel { .. } => orders.push(env),
                _ => {}
            }
        }
        for agent in waiting {
            log::warn!("{agent} missed the decision deadline at {now}");
            records.insert(
                agent.clone(),
                DecisionRecord {
                    agent_id: agent,
                    sim_time: now,
                    actions: Vec::new(),
                    explanation: Some("DECISION_TIMEOUT".into()),
                },
            );
        }
        for record in records.values() {
            self.audit
                .append(record)
                .map_err(|e| SimError::Io(format!("audit log: {e}")))?;
        }
        orders.sort_by(|a, b| {
            (a.sim_time, a.sender.as_str(), a.seq).cmp(&(b.sim_time, b.sender.as_str(), b.seq))
        });
        Ok(orders)
    }

    fn log_status(&mut self, order_id: OrderId, info: &LiveOrder, status: ExecStatus, qty: u64, remaining: u64, reason: Option<String>) {
        self.log.push(LogRow {
            sim_time: self.clock,
            event: LogEvent::Status(status),
            agent_id: info.agent.clone(),
            order_id,
            action: info.action,
            order_type: info.order_type,
            price: info.level,
            quantity: qty,
            remaining,
            liquidity: None,
            counterparty: None,
            reason,
        });
    }

    /// Handles an order submission: validation, account checks, and the
    /// acceptance or rejection report. `ref_price` sizes market orders.
    pub fn admit(&mut self, env: &Envelope, ref_price: Option<Price>) -> Result<Option<Admitted>, SimError> {
        let Payload::OrderSubmit { order, action } = &env.payload else {
            return Ok(None);
        };
        let info = LiveOrder {
            agent: order.agent_id.clone(),
            action: *action,
            order_type: order.order_type,
            level: order
                .limit_price
                .or(order.stop_price)
                .and_then(|p| self.instrument.to_ticks(p)),
        };
        let reject = |code: &str| Some(code.to_string());
        let verdict = if order.agent_id.as_str() != env.sender {
            Err(reject("AGENT_MISMATCH"))
        } else if env.sim_time != self.clock {
            Err(reject("DECISION_TIMEOUT"))
        } else if !self.seen.insert(order.order_id) {
            Err(reject("DUPLICATE_ORDER"))
        } else if order.side != action.side() {
            Err(reject("SIDE_MISMATCH"))
        } else {
            validate_order(order, &self.instrument).map_err(|code| reject(code.as_str()))
        };
        let mut priced = match verdict {
            Ok(p) => p,
            Err(reason) => {
                if !self.accounts.contains_key(&info.agent) {
                    return Ok(None);
                }
                self.log_status(order.order_id, &info, ExecStatus::Rejected, order.quantity, 0, reason.clone());
                self.send_report(order.order_id, info.agent, *action, ExecStatus::Rejected, Vec::new(), 0, reason, false)?;
                return Ok(None);
            }
        };
        let account = self.accounts.get_mut(&info.agent).expect("sender is on the roster");
        match account.place(priced.order_id, *action, priced.kind, priced.quantity, ref_price) {
            Err(why) => {
                let reason = Some(why.as_str().to_string());
                self.log_status(priced.order_id, &info, ExecStatus::Rejected, priced.quantity, 0, reason.clone());
                self.send_report(priced.order_id, info.agent, *action, ExecStatus::Rejected, Vec::new(), 0, reason, false)?;
                Ok(None)
            }
            Ok(approved) => {
                priced.quantity = approved.quantity;
                let reason = approved.clipped.then(|| "CLIPPED".to_string());
                self.log_status(priced.order_id, &info, ExecStatus::Accepted, approved.quantity, approved.quantity, reason.clone());
                self.send_report(
                    priced.order_id,
                    info.agent.clone(),
                    *action,
                    ExecStatus::Accepted,
                    Vec::new(),
                    approved.quantity,
                    reason,
                    false,
                )?;
                self.actions.insert(priced.order_id, info.action);
                self.live.insert(priced.order_id, info);
                Ok(Some(Admitted {
                    order: priced,
                    reserve: approved.reserve,
                }))
            }
        }
    }

    /// Rejects a cancel that found nothing to cancel.
    pub fn reject_cancel(&mut self, env: &Envelope) -> Result<(), SimError> {
        let Payload::OrderCancel { order_id, agent_id } = &env.payload else {
            return Ok(());
        };
        if agent_id.as_str() != env.sender || !self.accounts.contains_key(agent_id) {
            return Ok(());
        }
        if self.live.contains_key(order_id) {
            // Still in flight; the cancel simply lost the race.
            return Ok(());
        }
        let Some(action) = self.actions.get(order_id).copied() else {
            log::warn!("{agent_id} canceled unknown order {order_id}");
            return Ok(());
        };
        self.send_report(
            *order_id,
            agent_id.clone(),
            action,
            ExecStatus::Rejected,
            Vec::new(),
            0,
            Some("UNKNOWN_ORDER".into()),
            false,
        )
    }

    /// Whether `env` is a cancel its sender may make.
    pub fn cancel_target(&self, env: &Envelope) -> Option<OrderId> {
        let Payload::OrderCancel { order_id, agent_id } = &env.payload else {
            return None;
        };
        let owner = &self.live.get(order_id)?.agent;
        (owner == agent_id && agent_id.as_str() == env.sender).then_some(*order_id)
    }

    /// Books one execution of a live order and returns its report line.
    pub fn fill(
        &mut self,
        order_id: OrderId,
        qty: u64,
        price: Price,
        time: SimTime,
        liquidity: Liquidity,
        counterparty: Counterparty,
    ) -> Result<FillReport, SimError> {
        let info = self.live.get(&order_id).expect("fill for a live order").clone();
        let account = self.accounts.get_mut(&info.agent).expect("live order has an account");
        account.on_fill(order_id, qty, price);
        let remaining = account.outstanding(order_id).map_or(0, |o| o.remaining);
        self.evaluator
            .record_fill(info.agent.as_str(), time, info.action.side(), qty, price.0 as f64)?;
        self.log.push(LogRow {
            sim_time: time,
            event: LogEvent::Fill,
            agent_id: info.agent.clone(),
            order_id,
            action: info.action,
            order_type: info.order_type,
            price: Some(price),
            quantity: qty,
            remaining,
            liquidity: Some(liquidity),
            counterparty: Some(counterparty),
            reason: None,
        });
        self.dirty.insert(info.agent);
        Ok(FillReport {
            price: self.instrument.price_value(price),
            quantity: qty,
            exec_time: time,
            liquidity,
            counterparty,
        })
    }

    /// Reports the outcome of a live order after fills, closing it if nothing
    /// is left. `end` forces a final status with the given reason.
    pub fn settle(
        &mut self,
        order_id: OrderId,
        fills: Vec<FillReport>,
        end: Option<(ExecStatus, String)>,
        defer: bool,
    ) -> Result<(), SimError> {
        let Some(info) = self.live.get(&order_id).cloned() else {
            return Ok(());
        };
        let account = self.accounts.get_mut(&info.agent).expect("live order has an account");
        let remaining = account.outstanding(order_id).map_or(0, |o| o.remaining);
        let (status, reason) = match end {
            Some((status, reason)) if remaining > 0 => (status, Some(reason)),
            _ if remaining == 0 => (ExecStatus::Filled, None),
            _ => (ExecStatus::Partial, None),
        };
        if status.is_final() {
            account.release(order_id);
            self.live.remove(&order_id);
            self.dirty.insert(info.agent.clone());
            let filled: u64 = fills.iter().map(|f| f.quantity).sum();
            self.log_status(order_id, &info, status, filled, remaining, reason.clone());
        }
        let left = if status.is_final() { 0 } else { remaining };
        self.send_report(order_id, info.agent, info.action, status, fills, left, reason, defer)
    }

    /// Cancels live sell/cover orders that now exceed the position they close.
    pub fn stale_exits(&self) -> Vec<OrderId> {
        self.accounts.values().flat_map(Account::stale_exits).collect()
    }

    /// Close-marked equity for every agent.
    pub fn record_equity(&mut self, at: SimTime) -> Result<(), SimError> {
        for (agent, account) in &self.accounts {
            let p = &account.portfolio;
            let ticks = self.mark.map_or(p.cash, |m| p.equity(m.0 as f64));
            self.evaluator
                .record_equity(agent.as_str(), at, self.instrument.ticks_to_value(ticks))?;
        }
        Ok(())
    }

    /// Fill cap for a live order at `price` under the portfolio rules.
    pub fn allowance(&self, order_id: OrderId, price: Price) -> u64 {
        self.live
            .get(&order_id)
            .and_then(|info| self.accounts.get(&info.agent))
            .map_or(0, |a| a.fill_allowance(order_id, price))
    }
}
