//! Order-level loop: exogenous book events replayed with agent orders
//! interleaved by arrival time, decisions on a fixed wall of ticks.

use std::collections::BTreeMap;

use crate::bus::{market_topic, BookTopData, ExecStatus, MarketData, Payload, Quote, QuoteSource};
use crate::domain::{AgentId, Candle, OrderId, Price, Side, SimTime, Timeframe};
use crate::indicators::IndicatorEngine;
use crate::matching::{
    apply_latency, replay_events, AgentAction, AgentInstruction, BookEvent, BookUpdate, Ladder, LatencyModel,
    MatchingEngine, ReplayStep, StepSource, UnfilledReason,
};

use super::engine::Engine;
use super::SimError;

/// Everything the order-level loop carries between ticks.
struct Replay<'a> {
    matcher: MatchingEngine,
    events: &'a [BookEvent],
    next_event: usize,
    in_flight: Vec<AgentInstruction>,
    prints: Vec<(Price, u64, SimTime)>,
    sent: BTreeMap<AgentId, u64>,
    depth: usize,
}

fn unfilled_reason(reason: UnfilledReason) -> &'static str {
    match reason {
        UnfilledReason::NoLiquidity => "NO_LIQUIDITY",
        UnfilledReason::BudgetExhausted => "BUDGET_EXHAUSTED",
    }
}

fn window_candle(symbol: &str, prints: &[(Price, u64, SimTime)], start: SimTime, end: SimTime) -> Option<Candle> {
    let (first, last) = (prints.first()?, prints.last()?);
    let high = prints.iter().map(|p| p.0).max()?;
    let low = prints.iter().map(|p| p.0).min()?;
    let volume = prints.iter().map(|p| p.1).sum::<u64>() as f64;
    Candle::new(symbol, first.0, high, low, last.0, volume, start, Timeframe(end.0 - start.0)).ok()
}

fn book_top(ladder: &Ladder, engine: &Engine, last: Option<Price>) -> BookTopData {
    let px = |p| engine.instrument.price_value(p);
    BookTopData {
        symbol: engine.instrument.symbol.clone(),
        as_of: engine.clock,
        bids: ladder.bids.iter().map(|l| (px(l.price), l.quantity)).collect(),
        asks: ladder.asks.iter().map(|l| (px(l.price), l.quantity)).collect(),
        last_trade: last.map(px),
    }
}

impl Engine {
    /// Folds replay steps into accounts, logs and reports.
    fn apply_steps(&mut self, steps: Vec<ReplayStep>, prints: &mut Vec<(Price, u64, SimTime)>) -> Result<(), SimError> {
        for step in steps {
            if let Some(w) = &step.warning {
                log::debug!("replay at {}: {w:?}", step.time);
            }
            let mut touched: Vec<OrderId> = Vec::new();
            let mut fills: BTreeMap<OrderId, Vec<_>> = BTreeMap::new();
            let mut ends: BTreeMap<OrderId, (ExecStatus, String)> = BTreeMap::new();
            for update in &step.updates {
                if let Some(print) = update.print() {
                    prints.push(print);
                }
                for f in update.fills() {
                    if !self.live.contains_key(&f.order_id) {
                        continue;
                    }
                    let report = self.fill(f.order_id, f.quantity, f.price, f.exec_time, f.liquidity, f.counterparty)?;
                    fills.entry(f.order_id).or_default().push(report);
                    if !touched.contains(&f.order_id) {
                        touched.push(f.order_id);
                    }
                }
                if let BookUpdate::Unfilled { order_id, reason, .. } = update {
                    if self.live.contains_key(order_id) {
                        ends.insert(*order_id, (ExecStatus::Canceled, unfilled_reason(*reason).into()));
                        if !touched.contains(order_id) {
                            touched.push(*order_id);
                        }
                    }
                }
            }
            if let StepSource::Agent(AgentInstruction {
                action: AgentAction::Cancel { order_id },
                ..
            }) = &step.source
            {
                if step.canceled && self.live.contains_key(order_id) {
                    ends.insert(*order_id, (ExecStatus::Canceled, "CANCELED_BY_AGENT".into()));
                    touched.push(*order_id);
                }
            }
            for id in touched {
                self.settle(id, fills.remove(&id).unwrap_or_default(), ends.remove(&id), false)?;
            }
        }
        Ok(())
    }

    /// Replays events and arrivals up to `upto` (inclusive or not).
    fn advance_book(&mut self, r: &mut Replay<'_>, upto: SimTime, inclusive: bool) -> Result<(), SimError> {
        let due = |t: SimTime| if inclusive { t <= upto } else { t < upto };
        let end = r.next_event + r.events[r.next_event..].partition_point(|e| due(e.event_time));
        r.in_flight.sort_by(AgentInstruction::priority_cmp);
        let n = r.in_flight.partition_point(|i| due(i.arrival));
        let arrivals: Vec<AgentInstruction> = r.in_flight.drain(..n).collect();
        let steps = replay_events(&mut r.matcher, &r.events[r.next_event..end], &arrivals, r.depth)
            .map_err(|e| SimError::Data(e.to_string()))?;
        r.next_event = end;
        self.apply_steps(steps, &mut r.prints)
    }

    /// Reference price at the current clock: last trade, else the mid.
    fn reference(&self, matcher: &MatchingEngine) -> Option<(Price, QuoteSource)> {
        if let Some(p) = matcher.last_trade_price() {
            return Some((p, QuoteSource::LastTrade));
        }
        let book = matcher.book();
        let (bid, ask) = (book.best_bid()?, book.best_ask()?);
        Some((Price((bid.0 + ask.0) / 2), QuoteSource::Mid))
    }

    /// Runs the order-level session over `[start, end)` and returns the bars
    /// built from the prints of each interval.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn run_orders(
        &mut self,
        events: &[BookEvent],
        start: SimTime,
        end: SimTime,
        interval_ms: u64,
        latency: &LatencyModel,
        depth: usize,
        indicators: &mut IndicatorEngine<f64>,
    ) -> Result<Vec<Candle>, SimError> {
        let topic = market_topic(&self.instrument.symbol);
        let symbol = self.instrument.symbol.clone();
        let mut r = Replay {
            matcher: MatchingEngine::new(),
            events,
            next_event: 0,
            in_flight: Vec::new(),
            prints: Vec::new(),
            sent: BTreeMap::new(),
            depth,
        };
        let mut bars = Vec::new();
        let mut prev: Option<SimTime> = None;
        let mut news_after = None;
        self.set_clock(start);
        self.broadcast_portfolios()?;

        let mut now = start;
        while now < end {
            self.set_clock(now);
            self.advance_book(&mut r, now, true)?;
            let ladder = r.matcher.book_top(depth);
            if let Some(from) = prev {
                if let Some(candle) = window_candle(&symbol, &r.prints, from, now) {
                    self.publish_bar(&candle, indicators, Some(&ladder))?;
                    bars.push(candle);
                }
            }
            r.prints.clear();
            let top = book_top(&ladder, self, r.matcher.last_trade_price());
            self.publish(&topic, Payload::MarketData(MarketData::BookTop(top)))?;
            let reference = self.reference(&r.matcher);
            if let Some((price, source)) = reference {
                self.mark = Some(price);
                let quote = Quote {
                    symbol: symbol.clone(),
                    as_of: now,
                    price: self.instrument.price_value(price),
                    source,
                };
                self.publish(&topic, Payload::MarketData(MarketData::Quote(quote)))?;
            }
            self.publish_news(news_after)?;
            news_after = Some(now);
            self.record_equity(now)?;
            self.flush_portfolios()?;

            let mut immediate = Vec::new();
            for env in self.barrier(true)? {
                let action = match &env.payload {
                    Payload::OrderSubmit { .. } => match self.admit(&env, reference.map(|r| r.0))? {
                        Some(admitted) => {
                            let budget = (admitted.order.side == Side::Buy).then(|| admitted.reserve.round() as i128);
                            AgentAction::Submit {
                                order: admitted.order,
                                budget,
                            }
                        }
                        None => continue,
                    },
                    Payload::OrderCancel { .. } => match self.cancel_target(&env) {
                        Some(order_id) => AgentAction::Cancel { order_id },
                        None => {
                            self.reject_cancel(&env)?;
                            continue;
                        }
                    },
                    _ => continue,
                };
                let agent_id = AgentId::new(env.sender.as_str());
                let seq = r.sent.entry(agent_id.clone()).or_default();
                *seq += 1;
                let instruction = AgentInstruction {
                    arrival: apply_latency(now, &agent_id, *seq, latency),
                    agent_id,
                    seq: *seq,
                    action,
                };
                if instruction.arrival == now {
                    immediate.push(instruction);
                } else {
                    r.in_flight.push(instruction);
                }
            }
            if !immediate.is_empty() {
                let steps = replay_events(&mut r.matcher, &[], &immediate, depth).map_err(|e| SimError::Data(e.to_string()))?;
                self.apply_steps(steps, &mut r.prints)?;
            }
            self.flush_portfolios()?;
            prev = Some(now);
            now = now + interval_ms;
        }

        self.set_clock(end);
        self.advance_book(&mut r, end, false)?;
        let ladder = r.matcher.book_top(depth);
        if let Some(from) = prev {
            if let Some(candle) = window_candle(&symbol, &r.prints, from, end) {
                self.publish_bar(&candle, indicators, Some(&ladder))?;
                bars.push(candle);
            }
        }
        if let Some((price, _)) = self.reference(&r.matcher) {
            self.mark = Some(price);
        }
        let open: Vec<OrderId> = self.live.keys().copied().collect();
        for id in open {
            r.matcher.cancel(id);
            self.settle(id, Vec::new(), Some((ExecStatus::SessionExpired, "END_OF_SESSION".into())), false)?;
        }
        self.record_equity(end)?;
        self.flush_portfolios()?;
        Ok(bars)
    }
}
