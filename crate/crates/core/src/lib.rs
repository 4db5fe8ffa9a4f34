//! Multi-agent market simulation: an order book and a candle resolver behind
//! a message bus, with agents deciding in lockstep with the simulation clock.
//!
//! The numeric core is generic over [`scalar::Scalar`] / [`scalar::Real`];
//! the aliases below fix it to `f64`, which is what the engine runs on.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod bus;
pub mod candles;
pub mod data;
pub mod domain;
pub mod evaluator;
pub mod indicators;
pub mod matching;
pub mod scalar;
pub mod sim;

pub type PortfolioState = agents::PortfolioState<f64>;
pub type Commitments = agents::Commitments<f64>;
pub type Ohlc = indicators::Ohlc<f64>;
pub type IndicatorEngine = indicators::IndicatorEngine<f64>;
pub type IndicatorFrame = indicators::IndicatorFrame<f64>;
pub type Ledger = evaluator::Ledger<f64>;
pub type TradeRecord = evaluator::TradeRecord<f64>;
pub type FillRecord = evaluator::FillRecord<f64>;
