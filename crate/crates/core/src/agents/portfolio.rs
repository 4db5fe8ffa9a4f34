use serde::{Deserialize, Serialize};

use crate::domain::{Instrument, Side};
use crate::scalar::Scalar;

/// Single-instrument netted position with average-cost P&L.
///
/// Units are the caller's choice. The engine keeps money in ticks so that cash
/// stays an exact integer under `f64`; tests also run it over `Ratio<i128>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState<S> {
    pub initial_cash: S,
    pub cash: S,
    pub long_qty: u64,
    pub short_qty: u64,
    pub avg_entry_long: S,
    pub avg_entry_short: S,
    pub realized_pnl: S,
}

/// How a fill changed the position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FillEffect<S> {
    /// Lots that reduced the opposite position.
    pub closed: u64,
    /// Lots that opened or extended a position on the fill's side.
    pub opened: u64,
    pub realized: S,
    /// Average entry of the lots that were closed.
    pub closed_entry: S,
}

impl<S: Scalar> PortfolioState<S> {
    pub fn new(cash: S) -> Self {
        PortfolioState {
            initial_cash: cash,
            cash,
            long_qty: 0,
            short_qty: 0,
            avg_entry_long: S::zero(),
            avg_entry_short: S::zero(),
            realized_pnl: S::zero(),
        }
    }

    pub fn net(&self) -> i64 {
        self.long_qty as i64 - self.short_qty as i64
    }

    pub fn is_flat(&self) -> bool {
        self.long_qty == 0 && self.short_qty == 0
    }

    /// Applies one execution. A buy covers any short first and a sell closes
    /// any long first; the rest opens a position on the fill's side.
    pub fn apply_fill(&mut self, side: Side, qty: u64, price: S) -> FillEffect<S> {
        let mut effect = FillEffect {
            closed: 0,
            opened: 0,
            realized: S::zero(),
            closed_entry: S::zero(),
        };
        let q = S::from_qty(qty);
        match side {
            Side::Buy => {
                self.cash = self.cash - q * price;
                let closed = qty.min(self.short_qty);
                if closed > 0 {
                    let pnl = S::from_qty(closed) * (self.avg_entry_short - price);
                    effect.closed = closed;
                    effect.closed_entry = self.avg_entry_short;
                    effect.realized = pnl;
                    self.realized_pnl = self.realized_pnl + pnl;
                    self.short_qty -= closed;
                    if self.short_qty == 0 {
                        self.avg_entry_short = S::zero();
                    }
                }
                let opened = qty - closed;
                if opened > 0 {
                    self.avg_entry_long = average(self.avg_entry_long, self.long_qty, price, opened);
                    self.long_qty += opened;
                    effect.opened = opened;
                }
            }
            Side::Sell => {
                self.cash = self.cash + q * price;
                let closed = qty.min(self.long_qty);
                if closed > 0 {
                    let pnl = S::from_qty(closed) * (price - self.avg_entry_long);
                    effect.closed = closed;
                    effect.closed_entry = self.avg_entry_long;
                    effect.realized = pnl;
                    self.realized_pnl = self.realized_pnl + pnl;
                    self.long_qty -= closed;
                    if self.long_qty == 0 {
                        self.avg_entry_long = S::zero();
                    }
                }
                let opened = qty - closed;
                if opened > 0 {
                    self.avg_entry_short = average(self.avg_entry_short, self.short_qty, price, opened);
                    self.short_qty += opened;
                    effect.opened = opened;
                }
            }
        }
        effect
    }

    pub fn unrealized_pnl(&self, mark: S) -> S {
        S::from_qty(self.long_qty) * (mark - self.avg_entry_long)
            + S::from_qty(self.short_qty) * (self.avg_entry_short - mark)
    }

    /// Cash plus positions marked at `mark` (shorts count negative).
    pub fn equity(&self, mark: S) -> S {
        self.cash + S::from_qty(self.long_qty) * mark - S::from_qty(self.short_qty) * mark
    }
}

fn average<S: Scalar>(avg: S, held: u64, price: S, added: u64) -> S {
    if held == 0 {
        return price;
    }
    (avg * S::from_qty(held) + price * S::from_qty(added)) / S::from_qty(held + added)
}

/// Portfolio in currency units, as reported to agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSnapshot {
    pub cash: f64,
    /// Cash not committed to open buy orders.
    pub available_cash: f64,
    pub long_qty: u64,
    pub short_qty: u64,
    pub net_qty: i64,
    pub avg_entry_long: f64,
    pub avg_entry_short: f64,
    pub realized_pnl: f64,
    pub unrealized_pnl: f64,
    pub equity: f64,
    pub mark_price: Option<f64>,
}

impl PortfolioSnapshot {
    /// Converts a tick-denominated state.
    pub fn from_ticks(
        state: &PortfolioState<f64>,
        reserved: f64,
        mark: Option<f64>,
        instrument: &Instrument,
    ) -> Self {
        let to_ccy = |ticks: f64| instrument.ticks_to_value(ticks);
        let unrealized = mark.map_or(0.0, |m| state.unrealized_pnl(m));
        PortfolioSnapshot {
            cash: to_ccy(state.cash),
            available_cash: to_ccy(state.cash - reserved),
            long_qty: state.long_qty,
            short_qty: state.short_qty,
            net_qty: state.net(),
            avg_entry_long: to_ccy(state.avg_entry_long),
            avg_entry_short: to_ccy(state.avg_entry_short),
            realized_pnl: to_ccy(state.realized_pnl),
            unrealized_pnl: to_ccy(unrealized),
            equity: to_ccy(mark.map_or(state.cash, |m| state.equity(m))),
            mark_price: mark.map(to_ccy),
        }
    }

    /// Largest lot count whose cost at `price` fits in the available cash.
    pub fn affordable(&self, price: f64, instrument: &Instrument) -> u64 {
        let cash = instrument.round_to_ticks(self.available_cash).0;
        let px = instrument.round_to_ticks(price).0;
        if px <= 0 || cash <= 0 {
            return 0;
        }
        let lots = (cash / px) as u64;
        lots - lots % instrument.lot_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type R = Ratio<i128>;

    fn r(v: i128) -> R {
        R::from_integer(v)
    }

    #[test]
    fn round_trip_long() {
        let mut p = PortfolioState::new(10_000.0);
        p.apply_fill(Side::Buy, 10, 100.0);
        p.apply_fill(Side::Sell, 10, 110.0);
        assert_eq!(p.realized_pnl, 100.0);
        assert!(p.is_flat());
        assert_eq!(p.cash, 10_100.0);
    }

    #[test]
    fn average_entry() {
        let mut p = PortfolioState::new(r(10_000));
        p.apply_fill(Side::Buy, 10, r(100));
        p.apply_fill(Side::Buy, 10, r(120));
        assert_eq!(p.avg_entry_long, r(110));
    }

    #[test]
    fn short_round_trip() {
        let mut p = PortfolioState::new(r(1_000));
        p.apply_fill(Side::Sell, 5, r(100));
        assert_eq!(p.short_qty, 5);
        p.apply_fill(Side::Buy, 5, r(90));
        assert_eq!(p.realized_pnl, r(50));
        assert!(p.is_flat());
    }

    #[test]
    fn buy_while_short_nets_first() {
        let mut p = PortfolioState::new(r(1_000));
        p.apply_fill(Side::Sell, 5, r(100));
        let e = p.apply_fill(Side::Buy, 8, r(95));
        assert_eq!((e.closed, e.opened), (5, 3));
        assert_eq!((p.long_qty, p.short_qty), (3, 0));
        assert_eq!(p.avg_entry_long, r(95));
    }

    #[test]
    fn affordable_lots() {
        let inst = Instrument::equity("X");
        let snap = PortfolioSnapshot {
            cash: 1000.0,
            available_cash: 1000.0,
            long_qty: 0,
            short_qty: 0,
            net_qty: 0,
            avg_entry_long: 0.0,
            avg_entry_short: 0.0,
            realized_pnl: 0.0,
            unrealized_pnl: 0.0,
            equity: 1000.0,
            mark_price: None,
        };
        assert_eq!(snap.affordable(100.0, &inst), 10);
        assert_eq!(snap.affordable(0.1 + 0.2, &inst), 3333);
        assert_eq!(PortfolioSnapshot { available_cash: 50.0, ..snap }.affordable(100.0, &inst), 0);
    }

    proptest! {
        #[test]
        fn accounting_identity(fills in prop::collection::vec((any::<bool>(), 1u64..50, 1i128..500), 0..60), mark in 1i128..500) {
            let mut p = PortfolioState::new(r(100_000));
            for (buy, qty, price) in fills {
                let side = if buy { Side::Buy } else { Side::Sell };
                p.apply_fill(side, qty, r(price));
                prop_assert!(p.long_qty == 0 || p.short_qty == 0);
                let m = r(mark);
                prop_assert_eq!(
                    p.equity(m) - p.initial_cash,
                    p.realized_pnl + p.unrealized_pnl(m)
                );
            }
        }
    }
}
