use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{ExecutionReport, MarketData};
use crate::data::{DataQuery, ExternalData};
use crate::domain::{Instrument, OrderType, Price, SimTime};
use crate::matching::fnv1a;

use super::provider::{ExternalProvider, ProviderConfig};
use super::{ActionKind, ActionRequest, AgentError, DecisionContext};

/// Outcome of one decision point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub actions: Vec<ActionRequest>,
    pub explanation: Option<String>,
}

impl Decision {
    pub fn none() -> Self {
        Decision::default()
    }

    pub fn one(action: ActionRequest) -> Self {
        let explanation = (!action.explanation.is_empty()).then(|| action.explanation.clone());
        Decision {
            actions: vec![action],
            explanation,
        }
    }
}

/// Decision logic of one agent. Implementations must be deterministic given
/// the messages they were fed and their configuration.
pub trait Strategy: Send {
    fn on_market_data(&mut self, _data: &MarketData) {}
    fn on_external_data(&mut self, _data: &ExternalData) {}
    fn on_execution(&mut self, _report: &ExecutionReport) {}
    /// Extra data to fetch before deciding at `now`.
    fn data_requests(&mut self, _now: SimTime) -> Vec<DataQuery> {
        Vec::new()
    }
    fn decide(&mut self, ctx: &DecisionContext) -> Decision;
}

/// Spends all available cash at the first quote it sees, then holds.
#[derive(Debug, Default)]
pub struct BuyAndHold {
    done: bool,
}

impl BuyAndHold {
    pub fn new() -> Self {
        BuyAndHold::default()
    }
}

impl Strategy for BuyAndHold {
    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        if self.done {
            return Decision::none();
        }
        let Some(quote) = &ctx.quote else {
            return Decision::none();
        };
        self.done = true;
        let qty = ctx.portfolio.affordable(quote.price, &ctx.instrument);
        if qty == 0 {
            return Decision::none();
        }
        Decision::one(ActionRequest::market(ActionKind::Buy, qty, "buy and hold: initial allocation"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cross {
    Up,
    Down,
}

/// Long-only crossover of two simple moving averages of bar closes.
///
/// Averages are compared on the tick grid in integer arithmetic, so flat
/// stretches never produce a spurious cross.
#[derive(Debug)]
pub struct MaCrossover {
    fast: usize,
    slow: usize,
    instrument: Instrument,
    closes: VecDeque<i64>,
    pending: Option<Cross>,
}

impl MaCrossover {
    pub fn new(fast: usize, slow: usize, instrument: Instrument) -> Result<Self, AgentError> {
        if fast == 0 || fast >= slow {
            return Err(AgentError::BadWindows { fast, slow });
        }
        Ok(MaCrossover {
            fast,
            slow,
            instrument,
            closes: VecDeque::with_capacity(slow + 1),
            pending: None,
        })
    }

    /// fast·slow-scaled difference of the two averages over the last `slow`
    /// closes ending `back` bars ago.
    fn spread(&self, back: usize) -> i128 {
        let end = self.closes.len() - back;
        let sum = |n: usize| -> i128 { self.closes.range(end - n..end).map(|&c| i128::from(c)).sum() };
        sum(self.fast) * self.slow as i128 - sum(self.slow) * self.fast as i128
    }
}

impl Strategy for MaCrossover {
    fn on_market_data(&mut self, data: &MarketData) {
        let MarketData::Bar(bar) = data else { return };
        if bar.symbol != self.instrument.symbol {
            return;
        }
        self.closes.push_back(self.instrument.round_to_ticks(bar.close).0);
        if self.closes.len() > self.slow + 1 {
            self.closes.pop_front();
        }
        if self.closes.len() <= self.slow {
            return;
        }
        let (prev, now) = (self.spread(1), self.spread(0));
        if prev <= 0 && now > 0 {
            self.pending = Some(Cross::Up);
        } else if prev >= 0 && now < 0 {
            self.pending = Some(Cross::Down);
        }
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        let Some(cross) = self.pending.take() else {
            return Decision::none();
        };
        let p = &ctx.portfolio;
        match cross {
            Cross::Up if p.long_qty == 0 => {
                let Some(quote) = &ctx.quote else {
                    return Decision::none();
                };
                let qty = p.affordable(quote.price, &ctx.instrument);
                if qty == 0 {
                    return Decision::none();
                }
                Decision::one(ActionRequest::market(
                    ActionKind::Buy,
                    qty,
                    format!("SMA{} crossed above SMA{}", self.fast, self.slow),
                ))
            }
            Cross::Down if p.long_qty > 0 => Decision::one(ActionRequest::market(
                ActionKind::Sell,
                p.long_qty,
                format!("SMA{} crossed below SMA{}", self.fast, self.slow),
            )),
            _ => Decision::none(),
        }
    }
}

/// Seeded noise trader. Sizes are drawn without regard to the portfolio, so
/// it doubles as a fuzzer for the engine's constraint checks.
#[derive(Debug)]
pub struct RandomTrader {
    rng: ChaCha8Rng,
    trade_prob: f64,
    max_qty: u64,
}

impl RandomTrader {
    pub fn new(seed: u64, agent_id: &str, trade_prob: f64, max_qty: u64) -> Self {
        RandomTrader {
            rng: ChaCha8Rng::seed_from_u64(seed ^ fnv1a(agent_id.as_bytes())),
            trade_prob: trade_prob.clamp(0.0, 1.0),
            max_qty: max_qty.max(1),
        }
    }
}

impl Strategy for RandomTrader {
    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        let Some(quote) = &ctx.quote else {
            return Decision::none();
        };
        if !self.rng.gen_bool(self.trade_prob) {
            return Decision::none();
        }
        let action = match self.rng.gen_range(0..4) {
            0 => ActionKind::Buy,
            1 => ActionKind::Sell,
            2 => ActionKind::Short,
            _ => ActionKind::ShortCover,
        };
        let lot = ctx.instrument.lot_size;
        let quantity = self.rng.gen_range(1..=self.max_qty) * lot;
        let ref_ticks = ctx.instrument.round_to_ticks(quote.price).0;
        let offset = ((ref_ticks as f64) * 0.02).max(1.0) as i64;
        let order_type = match self.rng.gen_range(0..3) {
            0 => OrderType::Market,
            1 => OrderType::Limit,
            _ => OrderType::Stop,
        };
        let price = (order_type != OrderType::Market).then(|| {
            let t = (ref_ticks + self.rng.gen_range(-offset..=offset)).max(1);
            ctx.instrument.price_value(Price(t))
        });
        Decision::one(ActionRequest {
            action,
            order_type,
            price,
            quantity,
            explanation: "random".into(),
        })
    }
}

/// Strategy selection as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum StrategySpec {
    BuyAndHold,
    MaCrossover {
        fast: usize,
        slow: usize,
    },
    Random {
        seed: u64,
        #[serde(default = "default_trade_prob")]
        trade_prob: f64,
        #[serde(default = "default_max_qty")]
        max_qty: u64,
    },
    External(ProviderConfig),
}

fn default_trade_prob() -> f64 {
    0.3
}

fn default_max_qty() -> u64 {
    20
}

impl StrategySpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        match self {
            StrategySpec::MaCrossover { fast, slow } if *fast == 0 || fast >= slow => {
                Err(AgentError::BadWindows { fast: *fast, slow: *slow })
            }
            StrategySpec::External(cfg) => cfg.validate(),
            _ => Ok(()),
        }
    }

    /// Whether runs with this strategy are reproducible without outside help.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, StrategySpec::External(_))
    }

    pub fn build(&self, agent_id: &str, instrument: &Instrument) -> Result<Box<dyn Strategy>, AgentError> {
        Ok(match self {
            StrategySpec::BuyAndHold => Box::new(BuyAndHold::new()),
            StrategySpec::MaCrossover { fast, slow } => Box::new(MaCrossover::new(*fast, *slow, instrument.clone())?),
            StrategySpec::Random {
                seed,
                trade_prob,
                max_qty,
            } => Box::new(RandomTrader::new(*seed, agent_id, *trade_prob, *max_qty)),
            StrategySpec::External(cfg) => Box::new(ExternalProvider::start(cfg.clone(), instrument.symbol.clone())?),
        })
    }
}
