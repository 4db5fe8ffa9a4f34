use serde::{Deserialize, Serialize};

use crate::domain::{Side, SimTime};
use crate::scalar::Scalar;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Long => 1,
            Direction::Short => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Long => "long",
            Direction::Short => "short",
        }
    }
}

/// One execution as the evaluator sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord<S> {
    pub time: SimTime,
    pub side: Side,
    pub qty: u64,
    pub price: S,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl<S: Copy> FillRecord<S> {
    pub fn map<T>(&self, f: impl Fn(S) -> T) -> FillRecord<T> {
        FillRecord {
            time: self.time,
            side: self.side,
            qty: self.qty,
            price: f(self.price),
            note: self.note.clone(),
        }
    }
}

/// A position episode. Closing part of an open trade splits off a closed
/// record for the closed quantity; the open record keeps the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord<S> {
    pub direction: Direction,
    pub qty: u64,
    pub open_time: SimTime,
    pub close_time: Option<SimTime>,
    pub entry_price: S,
    pub exit_price: Option<S>,
    pub realized_pnl: S,
    pub open: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_note: Option<String>,
}

impl<S: Copy> TradeRecord<S> {
    pub fn map<T>(&self, f: impl Fn(S) -> T) -> TradeRecord<T> {
        TradeRecord {
            direction: self.direction,
            qty: self.qty,
            open_time: self.open_time,
            close_time: self.close_time,
            entry_price: f(self.entry_price),
            exit_price: self.exit_price.map(&f),
            realized_pnl: f(self.realized_pnl),
            open: self.open,
            entry_note: self.entry_note.clone(),
            exit_note: self.exit_note.clone(),
        }
    }
}

/// Average-cost trade ledger for one agent and one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger<S> {
    closed: Vec<TradeRecord<S>>,
    open: Option<TradeRecord<S>>,
    fills: Vec<FillRecord<S>>,
}

impl<S> Default for Ledger<S> {
    fn default() -> Self {
        Ledger {
            closed: Vec::new(),
            open: None,
            fills: Vec::new(),
        }
    }
}

impl<S: Scalar> Ledger<S> {
    pub fn new() -> Self {
        Ledger::default()
    }

    pub fn fills(&self) -> &[FillRecord<S>] {
        &self.fills
    }

    pub fn closed_trades(&self) -> &[TradeRecord<S>] {
        &self.closed
    }

    pub fn open_trade(&self) -> Option<&TradeRecord<S>> {
        self.open.as_ref()
    }

    /// Closed trades in close order, then the open trade if any.
    pub fn trades(&self) -> Vec<TradeRecord<S>> {
        self.closed.iter().cloned().chain(self.open.clone()).collect()
    }

    pub fn realized_pnl(&self) -> S {
        self.closed.iter().fold(S::zero(), |acc, t| acc + t.realized_pnl)
    }

    pub fn record_fill(&mut self, fill: FillRecord<S>) -> Result<(), EvalError> {
        if let Some(last) = self.fills.last() {
            if fill.time < last.time {
                return Err(EvalError::OutOfOrder {
                    at: fill.time,
                    last: last.time,
                });
            }
        }
        let closing = match fill.side {
            Side::Buy => Direction::Short,
            Side::Sell => Direction::Long,
        };
        let mut rest = fill.qty;
        if let Some(open) = self.open.as_mut().filter(|o| o.direction == closing) {
            let q = rest.min(open.qty);
            let diff = match closing {
                Direction::Long => fill.price - open.entry_price,
                Direction::Short => open.entry_price - fill.price,
            };
            self.closed.push(TradeRecord {
                direction: closing,
                qty: q,
                open_time: open.open_time,
                close_time: Some(fill.time),
                entry_price: open.entry_price,
                exit_price: Some(fill.price),
                realized_pnl: S::from_qty(q) * diff,
                open: false,
                entry_note: open.entry_note.clone(),
                exit_note: fill.note.clone(),
            });
            open.qty -= q;
            rest -= q;
            if open.qty == 0 {
                self.open = None;
            }
        }
        if rest > 0 {
            let direction = match fill.side {
                Side::Buy => Direction::Long,
                Side::Sell => Direction::Short,
            };
            match self.open.as_mut() {
                Some(open) => {
                    let held = open.qty;
                    open.entry_price = (open.entry_price * S::from_qty(held) + fill.price * S::from_qty(rest))
                        / S::from_qty(held + rest);
                    open.qty += rest;
                }
                None => {
                    self.open = Some(TradeRecord {
                        direction,
                        qty: rest,
                        open_time: fill.time,
                        close_time: None,
                        entry_price: fill.price,
                        exit_price: None,
                        realized_pnl: S::zero(),
                        open: true,
                        entry_note: fill.note.clone(),
                        exit_note: None,
                    })
                }
            }
        }
        self.fills.push(fill);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::PortfolioState;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn fill(t: u64, side: Side, qty: u64, price: f64) -> FillRecord<f64> {
        FillRecord {
            time: SimTime(t),
            side,
            qty,
            price,
            note: None,
        }
    }

    #[test]
    fn round_trip_is_one_closed_trade() {
        let mut l = Ledger::new();
        l.record_fill(fill(1, Side::Buy, 10, 100.0)).unwrap();
        l.record_fill(fill(2, Side::Sell, 10, 110.0)).unwrap();
        assert_eq!(l.closed_trades().len(), 1);
        assert_eq!(l.closed_trades()[0].realized_pnl, 100.0);
        assert!(l.open_trade().is_none());
    }

    #[test]
    fn partial_close_splits() {
        let mut l = Ledger::new();
        l.record_fill(fill(1, Side::Buy, 10, 100.0)).unwrap();
        l.record_fill(fill(2, Side::Sell, 4, 105.0)).unwrap();
        let closed = &l.closed_trades()[0];
        assert_eq!((closed.qty, closed.open, closed.realized_pnl), (4, false, 20.0));
        let open = l.open_trade().unwrap();
        assert_eq!((open.qty, open.open, open.open_time), (6, true, SimTime(1)));
    }

    #[test]
    fn flip_closes_then_opens() {
        let mut l = Ledger::new();
        l.record_fill(fill(1, Side::Sell, 5, 100.0)).unwrap();
        l.record_fill(fill(2, Side::Buy, 8, 90.0)).unwrap();
        assert_eq!(l.closed_trades()[0].realized_pnl, 50.0);
        assert_eq!(l.closed_trades()[0].direction, Direction::Short);
        let open = l.open_trade().unwrap();
        assert_eq!((open.direction, open.qty, open.entry_price), (Direction::Long, 3, 90.0));
    }

    #[test]
    fn out_of_order_is_refused() {
        let mut l = Ledger::new();
        l.record_fill(fill(5, Side::Buy, 1, 1.0)).unwrap();
        assert!(matches!(
            l.record_fill(fill(4, Side::Buy, 1, 1.0)),
            Err(EvalError::OutOfOrder { .. })
        ));
    }

    proptest! {
        #[test]
        fn reconciles_with_portfolio(fills in prop::collection::vec((any::<bool>(), 1u64..40, 1i64..500), 1..60)) {
            type R = Ratio<i128>;
            let mut ledger: Ledger<R> = Ledger::new();
            let mut book = PortfolioState::new(R::from_integer(1_000_000));
            for (i, (buy, qty, px)) in fills.into_iter().enumerate() {
                let side = if buy { Side::Buy } else { Side::Sell };
                let price = R::from_integer(px.into());
                ledger.record_fill(FillRecord { time: SimTime(i as u64), side, qty, price, note: None }).unwrap();
                book.apply_fill(side, qty, price);
            }
            prop_assert_eq!(ledger.realized_pnl(), book.realized_pnl);
            for t in ledger.closed_trades() {
                let sign = R::from_integer(t.direction.sign().into());
                prop_assert_eq!(t.realized_pnl, R::from_integer(t.qty.into()) * (t.exit_price.unwrap() - t.entry_price) * sign);
                prop_assert!(t.close_time.unwrap() >= t.open_time);
            }
            let open_qty = ledger.open_trade().map_or(0, |t| t.qty);
            prop_assert_eq!(open_qty, book.long_qty + book.short_qty);
            if let Some(t) = ledger.open_trade() {
                let entry = match t.direction { Direction::Long => book.avg_entry_long, Direction::Short => book.avg_entry_short };
                prop_assert_eq!(t.entry_price, entry);
            }
        }
    }
}
