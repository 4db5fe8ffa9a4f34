use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, OrderId, Price, Side, SimTime};

/// A dormant stop order. Stops live outside the book and never show in depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingStop {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub stop_price: Price,
    pub quantity: u64,
    pub arrival_time: SimTime,
    pub seq: u64,
    pub budget: Option<i128>,
}

impl PendingStop {
    pub fn is_triggered_by(&self, last_trade: Price) -> bool {
        match self.side {
            Side::Sell => last_trade <= self.stop_price,
            Side::Buy => last_trade >= self.stop_price,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StopBook {
    stops: Vec<PendingStop>,
}

impl StopBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn contains(&self, order_id: OrderId) -> bool {
        self.stops.iter().any(|s| s.order_id == order_id)
    }

    pub fn insert(&mut self, stop: PendingStop) {
        self.stops.push(stop);
    }

    pub fn cancel(&mut self, order_id: OrderId) -> Option<PendingStop> {
        let pos = self.stops.iter().position(|s| s.order_id == order_id)?;
        Some(self.stops.remove(pos))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PendingStop> {
        self.stops.iter()
    }

    /// Removes and returns every stop the print at `last_trade` activates.
    ///
    /// Activation order: stops nearest the trigger first (highest sell stop,
    /// lowest buy stop), then earlier arrival, then engine sequence.
    pub fn check_stop_triggers(&mut self, last_trade: Price) -> Vec<PendingStop> {
        let (mut fired, kept): (Vec<_>, Vec<_>) = self
            .stops
            .drain(..)
            .partition(|s| s.is_triggered_by(last_trade));
        self.stops = kept;
        fired.sort_by(|a, b| {
            let by_price = match a.side {
                Side::Sell => b.stop_price.cmp(&a.stop_price),
                Side::Buy => a.stop_price.cmp(&b.stop_price),
            };
            // Sell stops sort ahead of buy stops; a single print fires only one side
            // unless both sides are stacked at the same price.
            a.side
                .cmp(&b.side)
                .reverse()
                .then(by_price)
                .then(a.arrival_time.cmp(&b.arrival_time))
                .then(a.seq.cmp(&b.seq))
        });
        fired
    }
}
