//! Shared vocabulary: time, instruments, orders, candles and fills.
//!
//! Prices are carried as integer tick counts ([`Price`]) everywhere inside the
//! engine. Decimal prices only appear at the edges (agent orders, data files,
//! reports) and are converted through [`Instrument`].

mod order;

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use order::{validate_order, Order, OrderKind, OrderType, PricedOrder, RejectCode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),
    #[error("invalid candle: {0}")]
    InvalidCandle(String),
    #[error("UNSORTED_INPUT: fill {index} at {time} precedes the previous fill")]
    UnsortedInput { index: usize, time: SimTime },
    #[error("fill {index} at {time} lies outside the bar")]
    OutsideBar { index: usize, time: SimTime },
}

/// Milliseconds since the Unix epoch (UTC). The only clock the engine consults.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_millis(millis: u64) -> Self {
        SimTime(millis)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, millis: u64) -> SimTime {
        SimTime(self.0.saturating_sub(millis))
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, millis: u64) -> SimTime {
        SimTime(self.0 + millis)
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Bar length in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timeframe(pub u64);

impl Timeframe {
    pub const MINUTE: Timeframe = Timeframe(60_000);
    pub const HOUR: Timeframe = Timeframe(3_600_000);
    pub const DAY: Timeframe = Timeframe(86_400_000);

    pub fn millis(self) -> u64 {
        self.0
    }
}

/// A price expressed as an integer number of ticks.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Price {
    pub fn ticks(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetClass {
    Equity,
    Crypto,
}

/// A tradable symbol with its price and quantity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instrument {
    pub symbol: String,
    pub asset_class: AssetClass,
    #[serde(default = "default_tick_size")]
    pub tick_size: f64,
    #[serde(default = "default_lot_size")]
    pub lot_size: u64,
}

fn default_tick_size() -> f64 {
    0.01
}

fn default_lot_size() -> u64 {
    1
}

/// Relative slack used when deciding whether a decimal price sits on the grid.
const TICK_EPSILON: f64 = 1e-7;

impl Instrument {
    pub fn new(
        symbol: impl Into<String>,
        asset_class: AssetClass,
        tick_size: f64,
        lot_size: u64,
    ) -> Result<Self, DomainError> {
        let instrument = Instrument {
            symbol: symbol.into(),
            asset_class,
            tick_size,
            lot_size,
        };
        instrument.check()?;
        Ok(instrument)
    }

    pub fn equity(symbol: impl Into<String>) -> Self {
        Instrument::new(symbol, AssetClass::Equity, 0.01, 1).expect("default grid is valid")
    }

    pub fn check(&self) -> Result<(), DomainError> {
        let symbol_ok = !self.symbol.is_empty()
            && self
                .symbol
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || "._-/".contains(c));
        if !symbol_ok {
            return Err(DomainError::InvalidInstrument(format!(
                "symbol {:?} must be a non-empty uppercase token",
                self.symbol
            )));
        }
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return Err(DomainError::InvalidInstrument(format!(
                "tick_size must be positive, got {}",
                self.tick_size
            )));
        }
        if self.lot_size == 0 {
            return Err(DomainError::InvalidInstrument("lot_size must be positive".into()));
        }
        Ok(())
    }

    /// Ticks per currency unit when the tick size is the reciprocal of an integer
    /// (0.01 -> 100). Dividing by it is exact where multiplying by 0.01 is not.
    fn ticks_per_unit(&self) -> Option<f64> {
        let inv = 1.0 / self.tick_size;
        let rounded = inv.round();
        ((inv - rounded).abs() < 1e-9 * rounded.max(1.0)).then_some(rounded)
    }

    /// Exact grid conversion; `None` when `value` is not a tick multiple.
    pub fn to_ticks(&self, value: f64) -> Option<Price> {
        if !value.is_finite() {
            return None;
        }
        let raw = value / self.tick_size;
        let rounded = raw.round();
        let slack = TICK_EPSILON * rounded.abs().max(1.0);
        ((raw - rounded).abs() <= slack).then_some(Price(rounded as i64))
    }

    /// Nearest grid price.
    pub fn round_to_ticks(&self, value: f64) -> Price {
        Price((value / self.tick_size).round() as i64)
    }

    pub fn price_value(&self, price: Price) -> f64 {
        self.ticks_to_value(price.0 as f64)
    }

    /// Converts a tick-denominated amount (possibly fractional) to currency.
    pub fn ticks_to_value(&self, ticks: f64) -> f64 {
        match self.ticks_per_unit() {
            Some(per_unit) => ticks / per_unit,
            None => ticks * self.tick_size,
        }
    }

    /// Currency amount in (fractional) ticks.
    pub fn value_to_ticks(&self, value: f64) -> f64 {
        match self.ticks_per_unit() {
            Some(per_unit) => value * per_unit,
            None => value / self.tick_size,
        }
    }

    /// Number of decimals needed to print a grid price.
    pub fn decimals(&self) -> usize {
        let mut decimals = 0;
        let mut scaled = self.tick_size;
        while decimals < 10 && (scaled - scaled.round()).abs() > 1e-9 {
            scaled *= 10.0;
            decimals += 1;
        }
        decimals
    }

    pub fn format_price(&self, price: Price) -> String {
        format!("{:.*}", self.decimals(), self.price_value(price))
    }
}

/// An OHLCV bar. Prices are on the instrument's tick grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub symbol: String,
    pub open: Price,
    pub high: Price,
    pub low: Price,
    pub close: Price,
    pub volume: f64,
    pub bar_start: SimTime,
    pub timeframe: Timeframe,
}

impl Candle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        symbol: impl Into<String>,
        open: Price,
        high: Price,
        low: Price,
        close: Price,
        volume: f64,
        bar_start: SimTime,
        timeframe: Timeframe,
    ) -> Result<Self, DomainError> {
        let candle = Candle {
            symbol: symbol.into(),
            open,
            high,
            low,
            close,
            volume,
            bar_start,
            timeframe,
        };
        candle.check()?;
        Ok(candle)
    }

    pub fn check(&self) -> Result<(), DomainError> {
        if self.low > self.open.min(self.close) {
            return Err(DomainError::InvalidCandle(format!(
                "low {} above min(open, close)",
                self.low
            )));
        }
        if self.high < self.open.max(self.close) {
            return Err(DomainError::InvalidCandle(format!(
                "high {} below max(open, close)",
                self.high
            )));
        }
        if self.low > self.high {
            return Err(DomainError::InvalidCandle("low above high".into()));
        }
        if !(self.volume >= 0.0) {
            return Err(DomainError::InvalidCandle(format!(
                "volume {} is negative or NaN",
                self.volume
            )));
        }
        Ok(())
    }

    /// First instant after the bar; the time at which the whole bar is known.
    pub fn end(&self) -> SimTime {
        self.bar_start + self.timeframe.0
    }

    pub fn is_up(&self) -> bool {
        self.close >= self.open
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liquidity {
    Maker,
    Taker,
}

/// Who was on the other side of a fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counterparty {
    Order(OrderId),
    /// Candle-level execution against the bar's range; there is no resting order.
    Bar,
    /// An execution printed by replayed market data rather than by an order we hold.
    Exogenous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub counterparty: Counterparty,
    pub price: Price,
    pub quantity: u64,
    pub exec_time: SimTime,
    pub liquidity: Liquidity,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub self_match: bool,
}

/// Folds time-sorted fills into one bar. `Ok(None)` marks a bar with no trades.
pub fn aggregate_fills_to_candle(
    fills: &[Fill],
    symbol: &str,
    bar_start: SimTime,
    timeframe: Timeframe,
) -> Result<Option<Candle>, DomainError> {
    let bar_end = bar_start + timeframe.0;
    let mut last_time = None;
    for (index, fill) in fills.iter().enumerate() {
        if last_time.is_some_and(|t| fill.exec_time < t) {
            return Err(DomainError::UnsortedInput {
                index,
                time: fill.exec_time,
            });
        }
        if fill.exec_time < bar_start || fill.exec_time >= bar_end {
            return Err(DomainError::OutsideBar {
                index,
                time: fill.exec_time,
            });
        }
        last_time = Some(fill.exec_time);
    }
    let (Some(first), Some(last)) = (fills.first(), fills.last()) else {
        return Ok(None);
    };
    let high = fills.iter().map(|f| f.price).max().expect("non-empty");
    let low = fills.iter().map(|f| f.price).min().expect("non-empty");
    let volume = fills.iter().map(|f| f.quantity).sum::<u64>() as f64;
    Ok(Some(Candle {
        symbol: symbol.to_string(),
        open: first.price,
        high,
        low,
        close: last.price,
        volume,
        bar_start,
        timeframe,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fill_at(ms: u64, price: i64, qty: u64) -> Fill {
        Fill {
            order_id: OrderId(ms),
            agent_id: AgentId::new("A1"),
            side: Side::Buy,
            counterparty: Counterparty::Bar,
            price: Price(price),
            quantity: qty,
            exec_time: SimTime(ms),
            liquidity: Liquidity::Taker,
            self_match: false,
        }
    }

    #[test]
    fn four_fills_fold_into_ohlcv() {
        let fills: Vec<_> = [10, 12, 9, 11]
            .iter()
            .enumerate()
            .map(|(i, &p)| fill_at(i as u64, p, 1))
            .collect();
        let c = aggregate_fills_to_candle(&fills, "X", SimTime(0), Timeframe::MINUTE)
            .unwrap()
            .unwrap();
        assert_eq!(
            (c.open, c.high, c.low, c.close, c.volume),
            (Price(10), Price(12), Price(9), Price(11), 4.0)
        );
    }

    #[test]
    fn single_fill_is_a_degenerate_bar() {
        let c = aggregate_fills_to_candle(&[fill_at(5, 7, 3)], "X", SimTime(0), Timeframe::MINUTE)
            .unwrap()
            .unwrap();
        assert_eq!((c.open, c.high, c.low, c.close), (Price(7), Price(7), Price(7), Price(7)));
        assert_eq!(c.volume, 3.0);
    }

    #[test]
    fn no_fills_no_bar() {
        assert_eq!(
            aggregate_fills_to_candle(&[], "X", SimTime(0), Timeframe::MINUTE).unwrap(),
            None
        );
    }

    #[test]
    fn unsorted_fills_are_rejected() {
        let fills = [fill_at(5, 1, 1), fill_at(3, 1, 1)];
        assert!(matches!(
            aggregate_fills_to_candle(&fills, "X", SimTime(0), Timeframe::MINUTE),
            Err(DomainError::UnsortedInput { index: 1, .. })
        ));
    }

    #[test]
    fn fills_outside_the_bar_are_rejected() {
        let fills = [fill_at(60_000, 1, 1)];
        assert!(aggregate_fills_to_candle(&fills, "X", SimTime(0), Timeframe::MINUTE).is_err());
    }

    #[test]
    fn tick_grid_conversions() {
        let nvda = Instrument::equity("NVDA");
        assert_eq!(nvda.to_ticks(100.00), Some(Price(10_000)));
        assert_eq!(nvda.to_ticks(100.05), Some(Price(10_005)));
        assert_eq!(nvda.to_ticks(100.003), None);
        assert_eq!(nvda.price_value(Price(10_005)), 100.05);
        assert_eq!(nvda.format_price(Price(10_005)), "100.05");
        assert_eq!(nvda.decimals(), 2);
        let coarse = Instrument::new("BTC", AssetClass::Crypto, 0.5, 1).unwrap();
        assert_eq!(coarse.to_ticks(101.5), Some(Price(203)));
        assert_eq!(coarse.to_ticks(101.25), None);
    }

    #[test]
    fn instrument_validation() {
        assert!(Instrument::new("nvda", AssetClass::Equity, 0.01, 1).is_err());
        assert!(Instrument::new("", AssetClass::Equity, 0.01, 1).is_err());
        assert!(Instrument::new("NVDA", AssetClass::Equity, 0.0, 1).is_err());
        assert!(Instrument::new("NVDA", AssetClass::Equity, 0.01, 0).is_err());
    }

    #[test]
    fn candle_invariants() {
        let ok = Candle::new("X", Price(10), Price(12), Price(9), Price(11), 1.0, SimTime(0), Timeframe::DAY);
        assert!(ok.is_ok());
        let bad = Candle::new("X", Price(10), Price(12), Price(13), Price(11), 1.0, SimTime(0), Timeframe::DAY);
        assert!(bad.is_err());
        let neg = Candle::new("X", Price(10), Price(12), Price(9), Price(11), -1.0, SimTime(0), Timeframe::DAY);
        assert!(neg.is_err());
    }

    proptest! {
        #[test]
        fn aggregated_bars_satisfy_candle_invariants(
            steps in prop::collection::vec((0u64..500, 1i64..10_000, 1u64..100), 1..60)
        ) {
            let mut t = 0;
            let fills: Vec<_> = steps
                .iter()
                .map(|&(dt, p, q)| {
                    t += dt;
                    fill_at(t, p, q)
                })
                .collect();
            let candle = aggregate_fills_to_candle(&fills, "X", SimTime(0), Timeframe::HOUR)
                .unwrap()
                .unwrap();
            prop_assert!(candle.check().is_ok());
            prop_assert_eq!(candle.volume, steps.iter().map(|s| s.2).sum::<u64>() as f64);
        }
    }
}
