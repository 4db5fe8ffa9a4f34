use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, OrderId, Price, Side, SimTime};

use super::{BookUpdate, Trade, UnfilledReason};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub remaining_qty: u64,
    pub price: Price,
    pub arrival_time: SimTime,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub price: Price,
    pub quantity: u64,
}

/// Aggregated depth, best level first on each side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ladder {
    pub bids: Vec<Level>,
    pub asks: Vec<Level>,
}

impl Ladder {
    pub fn bid_qty(&self) -> u64 {
        self.bids.iter().map(|l| l.quantity).sum()
    }

    pub fn ask_qty(&self) -> u64 {
        self.asks.iter().map(|l| l.quantity).sum()
    }
}

/// Full copy of the book, for comparisons and offline inspection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub bids: Vec<(Price, Vec<RestingOrder>)>,
    pub asks: Vec<(Price, Vec<RestingOrder>)>,
    pub last_trade_price: Option<Price>,
}

/// An incoming order as the book sees it. `limit == None` means market.
#[derive(Debug, Clone)]
pub struct Taker {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub limit: Option<Price>,
    pub quantity: u64,
    pub arrival_time: SimTime,
    /// Cap on `sum(price_ticks * qty)` the order may spend; remainder is dropped.
    pub budget: Option<i128>,
}

pub(crate) const EXOGENOUS: &str = "@exchange";

pub(crate) fn is_exogenous(agent: &AgentId) -> bool {
    agent.as_str() == EXOGENOUS
}

/// Price-time priority limit order book.
///
/// Bids are keyed ascending and walked in reverse; asks are walked forward.
#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<RestingOrder>>,
    asks: BTreeMap<Price, VecDeque<RestingOrder>>,
    index: HashMap<OrderId, (Side, Price)>,
    last_trade_price: Option<Price>,
    next_seq: u64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_trade_price(&self) -> Option<Price> {
        self.last_trade_price
    }

    pub(crate) fn set_last_trade_price(&mut self, price: Price) {
        self.last_trade_price = Some(price);
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn contains(&self, order_id: OrderId) -> bool {
        self.index.contains_key(&order_id)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    pub fn resting(&self, order_id: OrderId) -> Option<&RestingOrder> {
        let (side, price) = self.index.get(&order_id)?;
        self.side(*side)
            .get(price)?
            .iter()
            .find(|o| o.order_id == order_id)
    }

    fn side(&self, side: Side) -> &BTreeMap<Price, VecDeque<RestingOrder>> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<RestingOrder>> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    /// Best opposite price for an incoming order on `side`.
    fn best_opposite(&self, side: Side) -> Option<Price> {
        match side {
            Side::Buy => self.best_ask(),
            Side::Sell => self.best_bid(),
        }
    }

    pub fn book_top(&self, depth: usize) -> Ladder {
        let level = |(price, queue): (&Price, &VecDeque<RestingOrder>)| Level {
            price: *price,
            quantity: queue.iter().map(|o| o.remaining_qty).sum(),
        };
        Ladder {
            bids: self.bids.iter().rev().take(depth).map(level).collect(),
            asks: self.asks.iter().take(depth).map(level).collect(),
        }
    }

    pub fn snapshot(&self) -> BookSnapshot {
        let levels = |side: &BTreeMap<Price, VecDeque<RestingOrder>>, rev: bool| {
            let iter: Box<dyn Iterator<Item = _>> = if rev {
                Box::new(side.iter().rev())
            } else {
                Box::new(side.iter())
            };
            iter.map(|(p, q)| (*p, q.iter().cloned().collect()))
                .collect::<Vec<_>>()
        };
        BookSnapshot {
            bids: levels(&self.bids, true),
            asks: levels(&self.asks, false),
            last_trade_price: self.last_trade_price,
        }
    }

    /// Matches `taker` against the opposite side, then rests any limit remainder.
    ///
    /// Fills execute at the resting order's price. Market remainders and
    /// budget-capped remainders are reported as unfilled, never rested.
    pub fn submit(&mut self, taker: Taker, out: &mut Vec<BookUpdate>) -> Vec<Trade> {
        let mut remaining = taker.quantity;
        let mut budget = taker.budget;
        let mut trades = Vec::new();
        let mut budget_hit = false;

        while remaining > 0 {
            let Some(best) = self.best_opposite(taker.side) else {
                break;
            };
            let marketable = match (taker.limit, taker.side) {
                (None, _) => true,
                (Some(limit), Side::Buy) => best <= limit,
                (Some(limit), Side::Sell) => best >= limit,
            };
            if !marketable {
                break;
            }
            let levels = match taker.side {
                Side::Buy => &mut self.asks,
                Side::Sell => &mut self.bids,
            };
            let queue = levels.get_mut(&best).expect("best level exists");
            let maker = queue.front_mut().expect("levels are never empty");
            let mut qty = remaining.min(maker.remaining_qty);
            if let Some(left) = budget {
                let affordable = if best.0 > 0 {
                    (left / best.0 as i128).max(0) as u64
                } else {
                    qty
                };
                if affordable == 0 {
                    budget_hit = true;
                    break;
                }
                qty = qty.min(affordable);
                budget = Some(left - best.0 as i128 * qty as i128);
            }
            maker.remaining_qty -= qty;
            remaining -= qty;
            let trade = Trade {
                taker_order: taker.order_id,
                taker_agent: taker.agent_id.clone(),
                taker_side: taker.side,
                maker_order: maker.order_id,
                maker_agent: maker.agent_id.clone(),
                price: best,
                quantity: qty,
                exec_time: taker.arrival_time,
                self_match: maker.agent_id == taker.agent_id && !is_exogenous(&taker.agent_id),
            };
            if maker.remaining_qty == 0 {
                let done = queue.pop_front().expect("front exists");
                self.index.remove(&done.order_id);
                if queue.is_empty() {
                    levels.remove(&best);
                }
            }
            self.last_trade_price = Some(best);
            out.push(BookUpdate::Trade(trade.clone()));
            trades.push(trade);
        }

        if remaining > 0 {
            match taker.limit {
                Some(price) if !budget_hit => {
                    let seq = self.next_seq;
                    self.next_seq += 1;
                    self.index.insert(taker.order_id, (taker.side, price));
                    self.side_mut(taker.side)
                        .entry(price)
                        .or_default()
                        .push_back(RestingOrder {
                            order_id: taker.order_id,
                            agent_id: taker.agent_id.clone(),
                            side: taker.side,
                            remaining_qty: remaining,
                            price,
                            arrival_time: taker.arrival_time,
                            seq,
                        });
                    out.push(BookUpdate::Rested {
                        order_id: taker.order_id,
                        agent_id: taker.agent_id,
                        remaining,
                    });
                }
                _ => out.push(BookUpdate::Unfilled {
                    order_id: taker.order_id,
                    agent_id: taker.agent_id,
                    quantity: remaining,
                    reason: if budget_hit {
                        UnfilledReason::BudgetExhausted
                    } else {
                        UnfilledReason::NoLiquidity
                    },
                }),
            }
        }
        trades
    }

    /// Removes a resting order entirely.
    pub fn cancel(&mut self, order_id: OrderId) -> Option<RestingOrder> {
        let (side, price) = self.index.remove(&order_id)?;
        let book_side = self.side_mut(side);
        let queue = book_side.get_mut(&price).expect("indexed level exists");
        let pos = queue
            .iter()
            .position(|o| o.order_id == order_id)
            .expect("indexed order exists");
        let removed = queue.remove(pos).expect("position valid");
        if queue.is_empty() {
            book_side.remove(&price);
        }
        Some(removed)
    }

    /// Decrements a resting order by `qty` (removing it at zero) and returns the
    /// quantity actually taken together with the order state before the change.
    pub(crate) fn reduce(&mut self, order_id: OrderId, qty: u64) -> Option<(RestingOrder, u64)> {
        let (side, price) = *self.index.get(&order_id)?;
        let queue = self.side_mut(side).get_mut(&price)?;
        let pos = queue.iter().position(|o| o.order_id == order_id)?;
        let before = queue[pos].clone();
        let taken = qty.min(before.remaining_qty);
        if taken == before.remaining_qty {
            self.cancel(order_id);
        } else {
            queue[pos].remaining_qty -= taken;
        }
        Some((before, taken))
    }
}
