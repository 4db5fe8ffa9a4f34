//! Technical indicators, as batch functions and as a streaming engine.
//!
//! Everything is generic over the float type. The streaming engine performs the
//! same arithmetic in the same order as the batch functions, so the two agree
//! exactly, not just within a tolerance.

mod batch;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Candle, Instrument, SimTime};
use crate::matching::Ladder;
use crate::scalar::Real;

pub use batch::{
    atr, bollinger, ema, imbalance, macd, order_book_imbalance, population_std, rsi, sma,
    support_resistance, true_range, true_ranges, vwap, vwap_bars,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndicatorError {
    #[error("WARMUP: need {needed} values, have {available}")]
    Warmup { needed: usize, available: usize },
    #[error("NO_VOLUME: total volume is zero")]
    NoVolume,
    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
    #[error("DUPLICATE_INDICATOR: {0}")]
    DuplicateIndicator(String),
}

impl IndicatorError {
    pub fn code(&self) -> &'static str {
        match self {
            IndicatorError::Warmup { .. } => "WARMUP",
            IndicatorError::NoVolume => "NO_VOLUME",
            IndicatorError::BadConfig(_) => "BAD_CONFIG",
            IndicatorError::DuplicateIndicator(_) => "DUPLICATE_INDICATOR",
        }
    }
}

/// Bar prices as plain numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ohlc<T> {
    pub open: T,
    pub high: T,
    pub low: T,
    pub close: T,
    pub volume: T,
}

impl<T: Real> Ohlc<T> {
    pub fn from_candle(candle: &Candle, instrument: &Instrument) -> Self {
        let px = |p| T::lit(instrument.price_value(p));
        Ohlc {
            open: px(candle.open),
            high: px(candle.high),
            low: px(candle.low),
            close: px(candle.close),
            volume: T::lit(candle.volume),
        }
    }

    pub fn typical_price(&self) -> T {
        (self.high + self.low + self.close) / T::from_qty(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Macd<T> {
    pub line: T,
    pub signal: T,
    pub histogram: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands<T> {
    pub mid: T,
    pub upper: T,
    pub lower: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorName {
    Sma,
    Ema,
    Rsi,
    Macd,
    Tr,
    Atr,
    Bollinger,
    Vwap,
    Imbalance,
    SupportResistance,
}

impl IndicatorName {
    pub const ALL: [IndicatorName; 10] = [
        IndicatorName::Sma,
        IndicatorName::Ema,
        IndicatorName::Rsi,
        IndicatorName::Macd,
        IndicatorName::Tr,
        IndicatorName::Atr,
        IndicatorName::Bollinger,
        IndicatorName::Vwap,
        IndicatorName::Imbalance,
        IndicatorName::SupportResistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorName::Sma => "sma",
            IndicatorName::Ema => "ema",
            IndicatorName::Rsi => "rsi",
            IndicatorName::Macd => "macd",
            IndicatorName::Tr => "tr",
            IndicatorName::Atr => "atr",
            IndicatorName::Bollinger => "bollinger",
            IndicatorName::Vwap => "vwap",
            IndicatorName::Imbalance => "imbalance",
            IndicatorName::SupportResistance => "support_resistance",
        }
    }
}

fn all_indicators() -> Vec<IndicatorName> {
    IndicatorName::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub enabled: Vec<IndicatorName>,
    pub sma_n: usize,
    pub ema_n: usize,
    pub rsi_n: usize,
    pub atr_n: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub bollinger_n: usize,
    pub bollinger_k: f64,
    pub imbalance_depth: usize,
    pub swing_window: usize,
    /// Support/resistance levels kept per side in a frame.
    pub max_levels: usize,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            enabled: all_indicators(),
            sma_n: 20,
            ema_n: 20,
            rsi_n: 14,
            atr_n: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            bollinger_n: 20,
            bollinger_k: 2.0,
            imbalance_depth: 5,
            swing_window: 2,
            max_levels: 5,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let windows = [
            ("sma_n", self.sma_n),
            ("ema_n", self.ema_n),
            ("rsi_n", self.rsi_n),
            ("atr_n", self.atr_n),
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("bollinger_n", self.bollinger_n),
            ("imbalance_depth", self.imbalance_depth),
            ("swing_window", self.swing_window),
        ];
        if let Some((name, _)) = windows.iter().find(|(_, n)| *n == 0) {
            return Err(IndicatorError::BadConfig(format!("{name} must be at least 1")));
        }
        if self.macd_fast >= self.macd_slow {
            return Err(IndicatorError::BadConfig(format!(
                "macd_fast ({}) must be below macd_slow ({})",
                self.macd_fast, self.macd_slow
            )));
        }
        if !(self.bollinger_k.is_finite() && self.bollinger_k >= 0.0) {
            return Err(IndicatorError::BadConfig("bollinger_k must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn is_enabled(&self, name: IndicatorName) -> bool {
        self.enabled.contains(&name)
    }
}

/// Indicator values after one bar. `None` means warming up (or disabled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorFrame<T> {
    pub bar_start: SimTime,
    /// Time the frame was computed; never earlier than the bar close.
    pub as_of: SimTime,
    pub sma: Option<T>,
    pub ema: Option<T>,
    pub rsi: Option<T>,
    pub macd_line: Option<T>,
    pub macd_signal: Option<T>,
    pub macd_hist: Option<T>,
    pub tr: Option<T>,
    pub atr: Option<T>,
    pub bb_mid: Option<T>,
    pub bb_upper: Option<T>,
    pub bb_lower: Option<T>,
    pub vwap: Option<T>,
    pub imbalance: Option<T>,
    pub support_levels: Vec<T>,
    pub resistance_levels: Vec<T>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, Option<T>>,
}

impl<T> IndicatorFrame<T> {
    fn empty(bar_start: SimTime, as_of: SimTime) -> Self {
        IndicatorFrame {
            bar_start,
            as_of,
            sma: None,
            ema: None,
            rsi: None,
            macd_line: None,
            macd_signal: None,
            macd_hist: None,
            tr: None,
            atr: None,
            bb_mid: None,
            bb_upper: None,
            bb_lower: None,
            vwap: None,
            imbalance: None,
            support_levels: Vec::new(),
            resistance_levels: Vec::new(),
            extras: BTreeMap::new(),
        }
    }
}

/// A user-supplied indicator fed the same bars as the built-ins.
pub trait CustomIndicator<T>: Send {
    fn name(&self) -> &str;
    fn update(&mut self, bar: &Ohlc<T>) -> Option<T>;
}

/// Incremental EMA seeded by the SMA of the first `n` inputs.
#[derive(Debug, Clone)]
struct EmaState<T> {
    n: usize,
    seed: Vec<T>,
    value: Option<T>,
}

impl<T: Real> EmaState<T> {
    fn new(n: usize) -> Self {
        EmaState {
            n,
            seed: Vec::with_capacity(n),
            value: None,
        }
    }

    fn push(&mut self, price: T) -> Option<T> {
        match self.value {
            Some(prev) => {
                let alpha = T::from_qty(2) / T::from_qty(self.n as u64 + 1);
                self.value = Some(alpha * price + (T::one() - alpha) * prev);
            }
            None => {
                self.seed.push(price);
                if self.seed.len() == self.n {
                    let sum = self.seed.iter().fold(T::zero(), |acc, v| acc + *v);
                    self.value = Some(sum / T::from_qty(self.n as u64));
                    self.seed = Vec::new();
                }
            }
        }
        self.value
    }
}

#[derive(Debug, Clone)]
struct RsiState<T> {
    n: usize,
    changes: usize,
    gain: T,
    loss: T,
}

impl<T: Real> RsiState<T> {
    fn push(&mut self, change: T) -> Option<T> {
        let (up, down) = if change > T::zero() {
            (change, T::zero())
        } else {
            (T::zero(), -change)
        };
        let nn = T::from_qty(self.n as u64);
        self.changes += 1;
        if self.changes <= self.n {
            self.gain = self.gain + up;
            self.loss = self.loss + down;
            if self.changes == self.n {
                self.gain = self.gain / nn;
                self.loss = self.loss / nn;
            } else {
                return None;
            }
        } else {
            self.gain = (self.gain * (nn - T::one()) + up) / nn;
            self.loss = (self.loss * (nn - T::one()) + down) / nn;
        }
        Some(batch::rsi_from_averages(self.gain, self.loss))
    }
}

fn push_window<T>(window: &mut VecDeque<T>, value: T, cap: usize) {
    window.push_back(value);
    while window.len() > cap {
        window.pop_front();
    }
}

fn last_n<T: Copy>(window: &VecDeque<T>, n: usize) -> Option<Vec<T>> {
    (window.len() >= n).then(|| window.iter().skip(window.len() - n).copied().collect())
}

/// Per-instrument streaming indicator state.
pub struct IndicatorEngine<T> {
    config: IndicatorConfig,
    tick: T,
    closes: VecDeque<T>,
    prev_close: Option<T>,
    trs: VecDeque<T>,
    ema: EmaState<T>,
    macd_fast: EmaState<T>,
    macd_slow: EmaState<T>,
    macd_signal: EmaState<T>,
    rsi: RsiState<T>,
    vwap_pv: T,
    vwap_v: T,
    swing: VecDeque<Ohlc<T>>,
    supports: Vec<T>,
    resistances: Vec<T>,
    custom: Vec<Box<dyn CustomIndicator<T>>>,
}

impl<T: Real> IndicatorEngine<T> {
    /// `tick` is the instrument's price increment, used to merge nearby levels.
    pub fn new(config: IndicatorConfig, tick: T) -> Result<Self, IndicatorError> {
        config.validate()?;
        Ok(IndicatorEngine {
            tick,
            closes: VecDeque::new(),
            prev_close: None,
            trs: VecDeque::new(),
            ema: EmaState::new(config.ema_n),
            macd_fast: EmaState::new(config.macd_fast),
            macd_slow: EmaState::new(config.macd_slow),
            macd_signal: EmaState::new(config.macd_signal),
            rsi: RsiState {
                n: config.rsi_n,
                changes: 0,
                gain: T::zero(),
                loss: T::zero(),
            },
            vwap_pv: T::zero(),
            vwap_v: T::zero(),
            swing: VecDeque::new(),
            supports: Vec::new(),
            resistances: Vec::new(),
            custom: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &IndicatorConfig {
        &self.config
    }

    /// Adds an indicator without touching the engine. Names are unique across
    /// built-ins and earlier registrations.
    pub fn register(&mut self, indicator: Box<dyn CustomIndicator<T>>) -> Result<(), IndicatorError> {
        let name = indicator.name().to_string();
        let clashes_builtin = IndicatorName::ALL.iter().any(|b| b.as_str() == name);
        if clashes_builtin || self.custom.iter().any(|c| c.name() == name) {
            return Err(IndicatorError::DuplicateIndicator(name));
        }
        self.custom.push(indicator);
        Ok(())
    }

    /// Clears session-scoped accumulators (VWAP).
    pub fn start_session(&mut self) {
        self.vwap_pv = T::zero();
        self.vwap_v = T::zero();
    }

    /// Folds in one completed bar and returns the frame for it. `book` is the
    /// book top at the bar close in order-level mode.
    pub fn update(
        &mut self,
        bar: &Ohlc<T>,
        bar_start: SimTime,
        as_of: SimTime,
        book: Option<&Ladder>,
    ) -> IndicatorFrame<T> {
        let cfg = &self.config;
        let on = |name| cfg.is_enabled(name);
        let mut frame = IndicatorFrame::empty(bar_start, as_of);

        let keep = cfg.sma_n.max(cfg.bollinger_n);
        push_window(&mut self.closes, bar.close, keep);
        if on(IndicatorName::Sma) {
            frame.sma = last_n(&self.closes, cfg.sma_n).map(|w| sma(&w, cfg.sma_n).expect("window full"));
        }
        if on(IndicatorName::Bollinger) {
            if let Some(w) = last_n(&self.closes, cfg.bollinger_n) {
                let b = bollinger(&w, cfg.bollinger_n, T::lit(cfg.bollinger_k)).expect("window full");
                frame.bb_mid = Some(b.mid);
                frame.bb_upper = Some(b.upper);
                frame.bb_lower = Some(b.lower);
            }
        }

        let ema_value = self.ema.push(bar.close);
        if on(IndicatorName::Ema) {
            frame.ema = ema_value;
        }

        let fast = self.macd_fast.push(bar.close);
        let slow = self.macd_slow.push(bar.close);
        if let (Some(f), Some(s)) = (fast, slow) {
            let line = f - s;
            if let Some(signal) = self.macd_signal.push(line) {
                if on(IndicatorName::Macd) {
                    frame.macd_line = Some(line);
                    frame.macd_signal = Some(signal);
                    frame.macd_hist = Some(line - signal);
                }
            }
        }

        if let Some(prev) = self.prev_close {
            let value = self.rsi.push(bar.close - prev);
            if on(IndicatorName::Rsi) {
                frame.rsi = value;
            }
        }

        let tr = true_range(bar, self.prev_close);
        push_window(&mut self.trs, tr, cfg.atr_n);
        if on(IndicatorName::Tr) {
            frame.tr = Some(tr);
        }
        if on(IndicatorName::Atr) && self.trs.len() == cfg.atr_n {
            let sum = self.trs.iter().fold(T::zero(), |acc, v| acc + *v);
            frame.atr = Some(sum / T::from_qty(cfg.atr_n as u64));
        }
        self.prev_close = Some(bar.close);

        self.vwap_pv = self.vwap_pv + bar.typical_price() * bar.volume;
        self.vwap_v = self.vwap_v + bar.volume;
        if on(IndicatorName::Vwap) && self.vwap_v > T::zero() {
            frame.vwap = Some(self.vwap_pv / self.vwap_v);
        }

        if on(IndicatorName::Imbalance) {
            if let Some(ladder) = book {
                let depth = cfg.imbalance_depth;
                let top = Ladder {
                    bids: ladder.bids.iter().take(depth).copied().collect(),
                    asks: ladder.asks.iter().take(depth).copied().collect(),
                };
                frame.imbalance = Some(order_book_imbalance(&top));
            }
        }

        let w = cfg.swing_window;
        push_window(&mut self.swing, *bar, 2 * w + 1);
        if self.swing.len() == 2 * w + 1 {
            let lows: Vec<T> = self.swing.iter().map(|b| b.low).collect();
            let highs: Vec<T> = self.swing.iter().map(|b| b.high).collect();
            if batch::is_strict_extremum(&lows, w, w, |c, o| c < o) {
                batch::push_level(&mut self.supports, lows[w], self.tick);
            }
            if batch::is_strict_extremum(&highs, w, w, |c, o| c > o) {
                batch::push_level(&mut self.resistances, highs[w], self.tick);
            }
        }
        if on(IndicatorName::SupportResistance) {
            frame.support_levels = self.supports.iter().take(cfg.max_levels).copied().collect();
            frame.resistance_levels = self.resistances.iter().take(cfg.max_levels).copied().collect();
        }

        for indicator in &mut self.custom {
            let value = indicator.update(bar);
            frame.extras.insert(indicator.name().to_string(), value);
        }
        frame
    }
}
