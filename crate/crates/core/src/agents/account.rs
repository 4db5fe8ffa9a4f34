use std::collections::BTreeMap;

use crate::domain::{OrderId, OrderKind, Price, Side};

use super::{enforce_constraints, ActionKind, Approved, Commitments, ConstraintReject, FillEffect, PortfolioState};

/// What the account holds back for one live order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outstanding {
    pub action: ActionKind,
    pub remaining: u64,
    /// Cash still reserved, in ticks.
    pub reserved: f64,
    pub short_part: u64,
}

/// The engine's authoritative view of one agent: money in ticks, plus what
/// its open orders have committed.
#[derive(Debug, Clone)]
pub struct Account {
    pub portfolio: PortfolioState<f64>,
    commitments: Commitments<f64>,
    orders: BTreeMap<OrderId, Outstanding>,
}

impl Account {
    pub fn new(cash_ticks: f64) -> Self {
        Account {
            portfolio: PortfolioState::new(cash_ticks),
            commitments: Commitments::default(),
            orders: BTreeMap::new(),
        }
    }

    pub fn commitments(&self) -> &Commitments<f64> {
        &self.commitments
    }

    pub fn outstanding(&self, order_id: OrderId) -> Option<&Outstanding> {
        self.orders.get(&order_id)
    }

    pub fn open_orders(&self) -> impl Iterator<Item = (&OrderId, &Outstanding)> {
        self.orders.iter()
    }

    /// Checks a new order and, if it passes, records its commitments.
    pub fn place(
        &mut self,
        order_id: OrderId,
        action: ActionKind,
        kind: OrderKind,
        quantity: u64,
        ref_price: Option<Price>,
    ) -> Result<Approved<f64>, ConstraintReject> {
        let price = kind.price().map(|p| p.0 as f64);
        let approved = enforce_constraints(
            action,
            quantity,
            price,
            &self.portfolio,
            &self.commitments,
            ref_price.map(|p| p.0 as f64),
        )?;
        let c = &mut self.commitments;
        match action.side() {
            Side::Buy => c.pending_buy += approved.quantity,
            Side::Sell => c.pending_sell += approved.quantity,
        }
        c.reserved_cash += approved.reserve;
        c.pending_short += approved.short_part;
        self.orders.insert(
            order_id,
            Outstanding {
                action,
                remaining: approved.quantity,
                reserved: approved.reserve,
                short_part: approved.short_part,
            },
        );
        Ok(approved)
    }

    /// Largest quantity of `order_id` that may execute at `price` without
    /// breaking the portfolio rules. Only candle-level gaps make this bind.
    pub fn fill_allowance(&self, order_id: OrderId, price: Price) -> u64 {
        let Some(o) = self.orders.get(&order_id) else {
            return 0;
        };
        let p = &self.portfolio;
        match o.action {
            ActionKind::Buy | ActionKind::ShortCover => {
                let spendable = o.reserved + (p.cash - self.commitments.reserved_cash);
                let cash_cap = if price.0 <= 0 {
                    o.remaining
                } else if spendable <= 0.0 {
                    0
                } else {
                    (spendable / price.0 as f64).floor() as u64
                };
                let cap = if o.action == ActionKind::ShortCover {
                    cash_cap.min(p.short_qty)
                } else {
                    cash_cap
                };
                o.remaining.min(cap)
            }
            ActionKind::Sell => o.remaining.min(p.long_qty),
            ActionKind::Short => o.remaining,
        }
    }

    /// Books an execution against an open order.
    pub fn on_fill(&mut self, order_id: OrderId, quantity: u64, price: Price) -> FillEffect<f64> {
        let o = self.orders.get_mut(&order_id).expect("fill for a known order");
        let side = o.action.side();
        let taken = quantity.min(o.remaining);
        o.remaining -= taken;
        let c = &mut self.commitments;
        match side {
            Side::Buy => {
                c.pending_buy -= taken;
                let cost = taken as f64 * price.0 as f64;
                let release = cost.min(o.reserved);
                o.reserved -= release;
                c.reserved_cash -= release;
            }
            Side::Sell => {
                c.pending_sell -= taken;
                let short_done = taken.min(o.short_part);
                o.short_part -= short_done;
                c.pending_short -= short_done;
            }
        }
        if o.remaining == 0 {
            self.release(order_id);
        }
        self.portfolio.apply_fill(side, taken, price.0 as f64)
    }

    /// Drops an order (canceled, expired, or finished) and frees what it held.
    pub fn release(&mut self, order_id: OrderId) -> Option<Outstanding> {
        let o = self.orders.remove(&order_id)?;
        let c = &mut self.commitments;
        match o.action.side() {
            Side::Buy => c.pending_buy -= o.remaining,
            Side::Sell => c.pending_sell -= o.remaining,
        }
        c.reserved_cash -= o.reserved;
        c.pending_short -= o.short_part;
        if self.orders.is_empty() {
            // Keeps float dust from accumulating in the reservation total.
            self.commitments.reserved_cash = 0.0;
        }
        Some(o)
    }

    /// Sell-side orders whose quantity now exceeds what they may close, after
    /// holdings shrank. Returned so the engine can cancel them.
    pub fn stale_exits(&self) -> Vec<OrderId> {
        let p = &self.portfolio;
        let mut sell_left = p.long_qty;
        let mut cover_left = p.short_qty;
        let mut stale = Vec::new();
        for (id, o) in &self.orders {
            let budget = match o.action {
                ActionKind::Sell => &mut sell_left,
                ActionKind::ShortCover => &mut cover_left,
                _ => continue,
            };
            if o.remaining > *budget {
                stale.push(*id);
            } else {
                *budget -= o.remaining;
            }
        }
        stale
    }
}
