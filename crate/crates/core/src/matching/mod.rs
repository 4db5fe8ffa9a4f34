//! Order-level execution: limit order book, stop triggers, latency and replay.
//!
//! The [`MatchingEngine`] is single-owner. Callers serialize every mutation
//! in arrival order; the engine itself never looks at a wall clock.

mod book;
mod latency;
mod replay;
mod stops;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AgentId, Counterparty, Fill, Liquidity, OrderId, OrderKind, Price, PricedOrder, Side, SimTime,
};

pub use book::{BookSnapshot, Ladder, Level, OrderBook, RestingOrder, Taker};
pub use latency::{apply_latency, LatencyMode, LatencyModel};
pub(crate) use latency::fnv1a;
pub use replay::{
    replay_events, AgentAction, AgentInstruction, BookEvent, BookEventKind, ReplayStep, StepSource,
};
pub use stops::{PendingStop, StopBook};

pub(crate) use book::EXOGENOUS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("UNSORTED_INPUT: event {index} at {time} precedes the previous event")]
    UnsortedInput { index: usize, time: SimTime },
}

/// Data-quality problems tolerated during replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "warning")]
pub enum ReplayWarning {
    UnknownOrder { order_id: OrderId },
    DuplicateOrder { order_id: OrderId },
}

/// One match between an incoming order and a resting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub taker_order: OrderId,
    pub taker_agent: AgentId,
    pub taker_side: Side,
    pub maker_order: OrderId,
    pub maker_agent: AgentId,
    pub price: Price,
    pub quantity: u64,
    pub exec_time: SimTime,
    pub self_match: bool,
}

impl Trade {
    /// The taker's and the maker's fills, in that order.
    pub fn fills(&self) -> [Fill; 2] {
        [
            Fill {
                order_id: self.taker_order,
                agent_id: self.taker_agent.clone(),
                side: self.taker_side,
                counterparty: Counterparty::Order(self.maker_order),
                price: self.price,
                quantity: self.quantity,
                exec_time: self.exec_time,
                liquidity: Liquidity::Taker,
                self_match: self.self_match,
            },
            Fill {
                order_id: self.maker_order,
                agent_id: self.maker_agent.clone(),
                side: self.taker_side.opposite(),
                counterparty: Counterparty::Order(self.taker_order),
                price: self.price,
                quantity: self.quantity,
                exec_time: self.exec_time,
                liquidity: Liquidity::Maker,
                self_match: self.self_match,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnfilledReason {
    /// Opposite side ran out before the order was complete.
    NoLiquidity,
    /// The order's cash budget could not pay for the next lot.
    BudgetExhausted,
}

/// Everything the engine did in response to one input, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "update")]
pub enum BookUpdate {
    Trade(Trade),
    /// A replayed execution against a resting order (no incoming order involved).
    ExternalExecution {
        maker_order: OrderId,
        maker_agent: AgentId,
        maker_side: Side,
        price: Price,
        quantity: u64,
        exec_time: SimTime,
    },
    Rested {
        order_id: OrderId,
        agent_id: AgentId,
        remaining: u64,
    },
    Unfilled {
        order_id: OrderId,
        agent_id: AgentId,
        quantity: u64,
        reason: UnfilledReason,
    },
    StopParked {
        order_id: OrderId,
        agent_id: AgentId,
    },
    StopTriggered {
        order_id: OrderId,
        agent_id: AgentId,
        at: SimTime,
    },
}

impl BookUpdate {
    /// Fills produced by this update, one per participating order.
    pub fn fills(&self) -> Vec<Fill> {
        match self {
            BookUpdate::Trade(t) => t.fills().to_vec(),
            BookUpdate::ExternalExecution {
                maker_order,
                maker_agent,
                maker_side,
                price,
                quantity,
                exec_time,
            } => vec![Fill {
                order_id: *maker_order,
                agent_id: maker_agent.clone(),
                side: *maker_side,
                counterparty: Counterparty::Exogenous,
                price: *price,
                quantity: *quantity,
                exec_time: *exec_time,
                liquidity: Liquidity::Maker,
                self_match: false,
            }],
            _ => Vec::new(),
        }
    }

    /// Price of a print, if this update is one.
    pub fn print(&self) -> Option<(Price, u64, SimTime)> {
        match self {
            BookUpdate::Trade(t) => Some((t.price, t.quantity, t.exec_time)),
            BookUpdate::ExternalExecution {
                price,
                quantity,
                exec_time,
                ..
            } => Some((*price, *quantity, *exec_time)),
            _ => None,
        }
    }
}

/// What a cancel removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canceled {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub remaining: u64,
    pub was_stop: bool,
}

/// Book plus stop list plus the trigger cascade that links them.
#[derive(Debug, Clone, Default)]
pub struct MatchingEngine {
    book: OrderBook,
    stops: StopBook,
    stop_seq: u64,
}

impl MatchingEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn stops(&self) -> &StopBook {
        &self.stops
    }

    pub fn book_top(&self, depth: usize) -> Ladder {
        self.book.book_top(depth)
    }

    pub fn last_trade_price(&self) -> Option<Price> {
        self.book.last_trade_price()
    }

    /// Submits a validated order that reached the matcher at `arrival`.
    ///
    /// `budget` caps the notional (ticks x lots) a buy may consume; it only
    /// matters for orders that take liquidity at unknown prices.
    pub fn submit(
        &mut self,
        order: &PricedOrder,
        arrival: SimTime,
        budget: Option<i128>,
    ) -> Vec<BookUpdate> {
        let mut out = Vec::new();
        let mut activated = VecDeque::new();
        match order.kind {
            OrderKind::Market | OrderKind::Limit(_) => {
                let taker = Taker {
                    order_id: order.order_id,
                    agent_id: order.agent_id.clone(),
                    side: order.side,
                    limit: match order.kind {
                        OrderKind::Limit(p) => Some(p),
                        _ => None,
                    },
                    quantity: order.quantity,
                    arrival_time: arrival,
                    budget,
                };
                self.take(taker, &mut out, &mut activated);
            }
            OrderKind::Stop(stop_price) => {
                let stop = PendingStop {
                    order_id: order.order_id,
                    agent_id: order.agent_id.clone(),
                    side: order.side,
                    stop_price,
                    quantity: order.quantity,
                    arrival_time: arrival,
                    seq: self.stop_seq,
                    budget,
                };
                self.stop_seq += 1;
                // A stop whose level already traded through activates on arrival.
                match self.book.last_trade_price() {
                    Some(last) if stop.is_triggered_by(last) => activated.push_back(stop),
                    _ => {
                        out.push(BookUpdate::StopParked {
                            order_id: stop.order_id,
                            agent_id: stop.agent_id.clone(),
                        });
                        self.stops.insert(stop);
                    }
                }
            }
        }
        self.cascade(arrival, &mut out, &mut activated);
        out
    }

    fn take(
        &mut self,
        taker: Taker,
        out: &mut Vec<BookUpdate>,
        activated: &mut VecDeque<PendingStop>,
    ) {
        for trade in self.book.submit(taker, out) {
            activated.extend(self.stops.check_stop_triggers(trade.price));
        }
    }

    /// Runs activated stops as market orders at `now`, with no extra latency.
    fn cascade(
        &mut self,
        now: SimTime,
        out: &mut Vec<BookUpdate>,
        activated: &mut VecDeque<PendingStop>,
    ) {
        while let Some(stop) = activated.pop_front() {
            out.push(BookUpdate::StopTriggered {
                order_id: stop.order_id,
                agent_id: stop.agent_id.clone(),
                at: now,
            });
            let taker = Taker {
                order_id: stop.order_id,
                agent_id: stop.agent_id,
                side: stop.side,
                limit: None,
                quantity: stop.quantity,
                arrival_time: now,
                budget: stop.budget,
            };
            self.take(taker, out, activated);
        }
    }

    /// Removes a resting or parked order. `None` for unknown or already-filled ids.
    pub fn cancel(&mut self, order_id: OrderId) -> Option<Canceled> {
        if let Some(resting) = self.book.cancel(order_id) {
            return Some(Canceled {
                order_id,
                agent_id: resting.agent_id,
                remaining: resting.remaining_qty,
                was_stop: false,
            });
        }
        self.stops.cancel(order_id).map(|stop| Canceled {
            order_id,
            agent_id: stop.agent_id,
            remaining: stop.quantity,
            was_stop: true,
        })
    }

    /// Applies one exogenous order-book event.
    pub fn apply_event(&mut self, event: &BookEvent) -> Result<Vec<BookUpdate>, ReplayWarning> {
        let mut out = Vec::new();
        match event.kind {
            BookEventKind::Add => {
                if self.book.contains(event.order_id) || self.stops.contains(event.order_id) {
                    return Err(ReplayWarning::DuplicateOrder {
                        order_id: event.order_id,
                    });
                }
                let mut activated = VecDeque::new();
                let taker = Taker {
                    order_id: event.order_id,
                    agent_id: AgentId::new(EXOGENOUS),
                    side: event.side,
                    limit: Some(event.price),
                    quantity: event.quantity,
                    arrival_time: event.event_time,
                    budget: None,
                };
                self.take(taker, &mut out, &mut activated);
                self.cascade(event.event_time, &mut out, &mut activated);
            }
            BookEventKind::Cancel => {
                let remaining = self
                    .book
                    .resting(event.order_id)
                    .map(|o| o.remaining_qty)
                    .ok_or(ReplayWarning::UnknownOrder {
                        order_id: event.order_id,
                    })?;
                let qty = if event.quantity == 0 {
                    remaining
                } else {
                    event.quantity
                };
                self.book.reduce(event.order_id, qty);
            }
            BookEventKind::Execute => {
                let (before, taken) = self.book.reduce(event.order_id, event.quantity).ok_or(
                    ReplayWarning::UnknownOrder {
                        order_id: event.order_id,
                    },
                )?;
                self.book.set_last_trade_price(before.price);
                out.push(BookUpdate::ExternalExecution {
                    maker_order: before.order_id,
                    maker_agent: before.agent_id,
                    maker_side: before.side,
                    price: before.price,
                    quantity: taken,
                    exec_time: event.event_time,
                });
                let mut activated: VecDeque<_> =
                    self.stops.check_stop_triggers(before.price).into();
                self.cascade(event.event_time, &mut out, &mut activated);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(id: u64, agent: &str, side: Side, kind: OrderKind, qty: u64) -> PricedOrder {
        PricedOrder {
            order_id: OrderId(id),
            agent_id: AgentId::new(agent),
            side,
            kind,
            quantity: qty,
            submit_time: SimTime(0),
        }
    }

    fn trades(updates: &[BookUpdate]) -> Vec<(u64, i64, u64)> {
        updates
            .iter()
            .filter_map(|u| match u {
                BookUpdate::Trade(t) => Some((t.maker_order.0, t.price.0, t.quantity)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn marketable_buy_limit_fills_at_resting_price() {
        let mut eng = MatchingEngine::new();
        eng.submit(&order(1, "M", Side::Sell, OrderKind::Limit(Price(9950)), 5), SimTime(0), None);
        let out = eng.submit(&order(2, "A", Side::Buy, OrderKind::Limit(Price(10_000)), 5), SimTime(1), None);
        assert_eq!(trades(&out), vec![(1, 9950, 5)]);
        assert!(eng.book().is_empty());
    }

    #[test]
    fn non_marketable_limit_rests() {
        let mut eng = MatchingEngine::new();
        eng.submit(&order(1, "M", Side::Sell, OrderKind::Limit(Price(10_100)), 5), SimTime(0), None);
        let out = eng.submit(&order(2, "A", Side::Buy, OrderKind::Limit(Price(10_000)), 5), SimTime(1), None);
        assert!(trades(&out).is_empty());
        assert_eq!(eng.book().best_bid(), Some(Price(10_000)));
        assert_eq!(eng.book().best_ask(), Some(Price(10_100)));
    }

    #[test]
    fn market_order_walks_two_levels() {
        let mut eng = MatchingEngine::new();
        eng.submit(&order(1, "M", Side::Sell, OrderKind::Limit(Price(9950)), 4), SimTime(0), None);
        eng.submit(&order(2, "M", Side::Sell, OrderKind::Limit(Price(10_000)), 8), SimTime(0), None);
        let out = eng.submit(&order(3, "A", Side::Buy, OrderKind::Market, 10), SimTime(1), None);
        assert_eq!(trades(&out), vec![(1, 9950, 4), (2, 10_000, 6)]);
        assert_eq!(eng.book_top(5).asks, vec![Level { price: Price(10_000), quantity: 2 }]);
    }

    #[test]
    fn market_order_into_empty_side_is_rejected_not_rested() {
        let mut eng = MatchingEngine::new();
        let out = eng.submit(&order(1, "A", Side::Buy, OrderKind::Market, 3), SimTime(0), None);
        assert_eq!(
            out,
            vec![BookUpdate::Unfilled {
                order_id: OrderId(1),
                agent_id: AgentId::new("A"),
                quantity: 3,
                reason: UnfilledReason::NoLiquidity
            }]
        );
        assert!(eng.book().is_empty());
    }

    #[test]
    fn cancel_semantics() {
        let mut eng = MatchingEngine::new();
        eng.submit(&order(1, "A", Side::Buy, OrderKind::Limit(Price(100)), 2), SimTime(0), None);
        eng.submit(&order(2, "B", Side::Buy, OrderKind::Limit(Price(100)), 3), SimTime(1), None);
        eng.submit(&order(3, "C", Side::Buy, OrderKind::Limit(Price(100)), 4), SimTime(2), None);
        assert!(eng.cancel(OrderId(2)).is_some());
        let queue: Vec<_> = eng.book().snapshot().bids[0].1.iter().map(|o| o.order_id.0).collect();
        assert_eq!(queue, vec![1, 3]);
        assert!(eng.cancel(OrderId(99)).is_none());
        eng.submit(&order(4, "D", Side::Sell, OrderKind::Market, 2), SimTime(3), None);
        assert!(eng.cancel(OrderId(1)).is_none(), "fully filled order cannot be canceled");
    }

    #[test]
    fn stops_cascade_after_prints() {
        let mut eng = MatchingEngine::new();
        eng.submit(&order(1, "M", Side::Buy, OrderKind::Limit(Price(9500)), 5), SimTime(0), None);
        eng.submit(&order(2, "M", Side::Buy, OrderKind::Limit(Price(9400)), 5), SimTime(0), None);
        eng.submit(&order(10, "S", Side::Sell, OrderKind::Stop(Price(9500)), 2), SimTime(1), None);
        eng.submit(&order(11, "T", Side::Sell, OrderKind::Stop(Price(9500)), 2), SimTime(2), None);
        assert_eq!(eng.stops().len(), 2);
        assert!(eng.book_top(5).asks.is_empty(), "stops are invisible in depth");
        let out = eng.submit(&order(3, "A", Side::Sell, OrderKind::Market, 1), SimTime(3), None);
        let triggered: Vec<_> = out
            .iter()
            .filter_map(|u| match u {
                BookUpdate::StopTriggered { order_id, .. } => Some(order_id.0),
                _ => None,
            })
            .collect();
        assert_eq!(triggered, vec![10, 11]);
        assert_eq!(trades(&out), vec![(1, 9500, 1), (1, 9500, 2), (1, 9500, 2)]);
    }

    #[test]
    fn exogenous_replay_events() {
        let mut eng = MatchingEngine::new();
        let add = BookEvent {
            event_time: SimTime(0),
            kind: BookEventKind::Add,
            order_id: OrderId(7),
            side: Side::Sell,
            price: Price(9950),
            quantity: 5,
        };
        eng.apply_event(&add).unwrap();
        assert!(matches!(eng.apply_event(&add), Err(ReplayWarning::DuplicateOrder { .. })));
        let exec = BookEvent { kind: BookEventKind::Execute, quantity: 2, ..add.clone() };
        let out = eng.apply_event(&exec).unwrap();
        assert_eq!(out[0].fills()[0].counterparty, Counterparty::Exogenous);
        assert_eq!(eng.last_trade_price(), Some(Price(9950)));
        let partial = BookEvent { kind: BookEventKind::Cancel, quantity: 1, ..add.clone() };
        eng.apply_event(&partial).unwrap();
        assert_eq!(eng.book().resting(OrderId(7)).unwrap().remaining_qty, 2);
        let unknown = BookEvent { order_id: OrderId(8), kind: BookEventKind::Cancel, ..add };
        assert_eq!(
            eng.apply_event(&unknown),
            Err(ReplayWarning::UnknownOrder { order_id: OrderId(8) })
        );
    }
}
