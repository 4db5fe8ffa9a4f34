//! Candle-level execution.
//!
//! Without tick data, conditional orders are resolved against a deterministic
//! path through each bar ([`synth_path`]): up bars visit the low before the
//! high, down bars the high before the low. Market orders take the open.
//! There is no depth at this granularity, so orders never fill partially.

mod path;
mod session;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AgentId, Candle, Counterparty, Fill, Liquidity, OrderId, OrderKind, Price, PricedOrder, Side,
    SimTime,
};

pub use path::{synth_path, PathPosition, SyntheticPath, Waypoint};
pub use session::{SessionCalendar, SessionClock, SessionEvent, SessionId};

/// An execution inside a bar, positioned on the synthetic path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarFill {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub price: Price,
    pub quantity: u64,
    #[serde(skip)]
    pub position: PathPosition,
    pub exec_time: SimTime,
}

impl BarFill {
    pub fn to_fill(&self) -> Fill {
        Fill {
            order_id: self.order_id,
            agent_id: self.agent_id.clone(),
            side: self.side,
            counterparty: Counterparty::Bar,
            price: self.price,
            quantity: self.quantity,
            exec_time: self.exec_time,
            liquidity: Liquidity::Taker,
            self_match: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarResolution {
    /// Fills in path order; ties keep the input order.
    pub fills: Vec<BarFill>,
    pub surviving: Vec<PricedOrder>,
}

/// Where on `path` an order executes, if it does.
fn execution_point(order: &PricedOrder, path: &SyntheticPath) -> Option<(PathPosition, Price)> {
    match (order.kind, order.side) {
        (OrderKind::Market, _) => Some((PathPosition::from_integer(0), path.open())),
        (OrderKind::Limit(level), Side::Buy) | (OrderKind::Stop(level), Side::Sell) => {
            path.first_at_or_below(level)
        }
        (OrderKind::Limit(level), Side::Sell) | (OrderKind::Stop(level), Side::Buy) => {
            path.first_at_or_above(level)
        }
    }
}

/// Resolves the open orders against one bar.
///
/// Limits fill at their price when the path crosses it, or at the open when the
/// bar opens through it. Stops behave the same way with the trigger price, so a
/// gap through a stop fills at the (worse) open.
pub fn resolve_bar(open_orders: &[PricedOrder], candle: &Candle) -> BarResolution {
    let path = synth_path(candle);
    let mut fills = Vec::new();
    let mut surviving = Vec::new();
    for (index, order) in open_orders.iter().enumerate() {
        match execution_point(order, &path) {
            Some((position, price)) => {
                let offset = path.offset_at(position, candle.timeframe.0);
                fills.push((
                    index,
                    BarFill {
                        order_id: order.order_id,
                        agent_id: order.agent_id.clone(),
                        side: order.side,
                        price,
                        quantity: order.quantity,
                        position,
                        exec_time: candle.bar_start + offset,
                    },
                ));
            }
            None => surviving.push(order.clone()),
        }
    }
    fills.sort_by(|(ia, a), (ib, b)| a.position.cmp(&b.position).then(ia.cmp(ib)));
    BarResolution {
        fills: fills.into_iter().map(|(_, f)| f).collect(),
        surviving,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Active,
    Queued,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionAdvance {
    pub events: Vec<SessionEvent>,
    /// Orders canceled because their session closed.
    pub expired: Vec<PricedOrder>,
    /// Queued orders that became active at an open.
    pub activated: Vec<OrderId>,
    pub market_open: bool,
}

/// Per-instrument order state for candle-level execution.
#[derive(Debug, Clone)]
pub struct CandleBook {
    clock: SessionClock,
    active: Vec<PricedOrder>,
    queued: Vec<PricedOrder>,
}

impl CandleBook {
    pub fn new(calendar: SessionCalendar) -> Self {
        CandleBook {
            clock: SessionClock::new(calendar),
            active: Vec::new(),
            queued: Vec::new(),
        }
    }

    pub fn clock(&self) -> &SessionClock {
        &self.clock
    }

    pub fn market_open(&self) -> bool {
        self.clock.market_open
    }

    pub fn active(&self) -> &[PricedOrder] {
        &self.active
    }

    pub fn queued(&self) -> &[PricedOrder] {
        &self.queued
    }

    /// Orders arriving while the market is closed wait for the next open.
    pub fn submit(&mut self, order: PricedOrder) -> Placement {
        if self.clock.market_open {
            self.active.push(order);
            Placement::Active
        } else {
            self.queued.push(order);
            Placement::Queued
        }
    }

    pub fn cancel(&mut self, order_id: OrderId) -> Option<PricedOrder> {
        for list in [&mut self.active, &mut self.queued] {
            if let Some(pos) = list.iter().position(|o| o.order_id == order_id) {
                return Some(list.remove(pos));
            }
        }
        None
    }

    /// Crosses to the bar starting at `now`: expires survivors of a closed
    /// session, then activates orders queued for the new one.
    pub fn advance_session(&mut self, now: SimTime) -> SessionAdvance {
        let events = self.clock.advance(now);
        self.apply(events)
    }

    /// End of data; closes the running session if the calendar has one.
    pub fn finish(&mut self) -> SessionAdvance {
        let events = self.clock.finish();
        let mut advance = self.apply(events);
        if !advance.events.is_empty() {
            advance.expired.append(&mut self.queued);
        }
        advance
    }

    fn apply(&mut self, events: Vec<SessionEvent>) -> SessionAdvance {
        let mut advance = SessionAdvance {
            market_open: self.clock.market_open,
            ..SessionAdvance::default()
        };
        for event in &events {
            match event {
                SessionEvent::Closed(_) => advance.expired.append(&mut self.active),
                SessionEvent::Opened(_) => {
                    advance
                        .activated
                        .extend(self.queued.iter().map(|o| o.order_id));
                    self.active.append(&mut self.queued);
                }
            }
        }
        advance.events = events;
        advance
    }

    /// Executes active orders against `candle`. Bars outside a session execute nothing.
    pub fn resolve(&mut self, candle: &Candle) -> Vec<BarFill> {
        if !self.clock.market_open {
            return Vec::new();
        }
        let resolution = resolve_bar(&self.active, candle);
        self.active = resolution.surviving;
        resolution.fills
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Timeframe;

    fn bar(o: i64, h: i64, l: i64, c: i64) -> Candle {
        Candle::new("X", Price(o), Price(h), Price(l), Price(c), 1.0, SimTime(0), Timeframe::DAY).unwrap()
    }

    fn order(id: u64, side: Side, kind: OrderKind) -> PricedOrder {
        PricedOrder {
            order_id: OrderId(id),
            agent_id: AgentId::new("A"),
            side,
            kind,
            quantity: 1,
            submit_time: SimTime(0),
        }
    }

    #[test]
    fn buy_limit_fills_on_the_down_leg() {
        let r = resolve_bar(&[order(1, Side::Buy, OrderKind::Limit(Price(105)))], &bar(108, 110, 100, 109));
        assert_eq!(r.fills.len(), 1);
        assert_eq!(r.fills[0].price, Price(105));
        assert!(r.surviving.is_empty());
    }

    #[test]
    fn limit_outside_range_survives() {
        let r = resolve_bar(&[order(1, Side::Buy, OrderKind::Limit(Price(99)))], &bar(108, 110, 100, 109));
        assert!(r.fills.is_empty());
        assert_eq!(r.surviving.len(), 1);
    }

    #[test]
    fn gap_through_sell_stop_fills_at_open() {
        let r = resolve_bar(&[order(1, Side::Sell, OrderKind::Stop(Price(101)))], &bar(98, 99, 97, 98));
        assert_eq!(r.fills[0].price, Price(98));
    }

    #[test]
    fn market_fills_at_open_and_fills_follow_path_order() {
        let orders = [
            order(1, Side::Sell, OrderKind::Limit(Price(110))),
            order(2, Side::Buy, OrderKind::Limit(Price(101))),
            order(3, Side::Buy, OrderKind::Market),
        ];
        let r = resolve_bar(&orders, &bar(108, 110, 100, 109));
        let ids: Vec<_> = r.fills.iter().map(|f| f.order_id.0).collect();
        assert_eq!(ids, vec![3, 2, 1]);
        assert_eq!(r.fills[0].exec_time, SimTime(0));
        assert!(r.fills.windows(2).all(|w| w[0].exec_time <= w[1].exec_time));
        assert!(r.fills.iter().all(|f| f.exec_time < SimTime(Timeframe::DAY.0)));
    }

    #[test]
    fn session_expiry_and_queueing() {
        let mut book = CandleBook::new(SessionCalendar::PerBar);
        assert_eq!(book.submit(order(1, Side::Buy, OrderKind::Limit(Price(1)))), Placement::Queued);
        let adv = book.advance_session(SimTime(0));
        assert_eq!(adv.activated, vec![OrderId(1)]);
        assert!(book.resolve(&bar(10, 12, 9, 11)).is_empty());
        let adv = book.advance_session(SimTime(86_400_000));
        assert_eq!(adv.expired.len(), 1);
        assert!(book.active().is_empty());
    }

    #[test]
    fn always_open_calendar_never_expires() {
        let mut book = CandleBook::new(SessionCalendar::Always);
        book.advance_session(SimTime(0));
        book.submit(order(1, Side::Buy, OrderKind::Limit(Price(1))));
        for day in 1..10 {
            assert!(book.advance_session(SimTime(day * 86_400_000)).expired.is_empty());
        }
        assert!(book.finish().expired.is_empty());
        assert_eq!(book.active().len(), 1);
    }
}
