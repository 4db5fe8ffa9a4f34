use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bus::{BarData, BookTopData, ExecutionReport, MarketData, PortfolioUpdate, Quote};
use crate::data::{CanonicalFundamentals, CanonicalNewsItem, DatedEvent, ExternalData};
use crate::domain::{Instrument, OrderId, OrderType, SimTime};
use crate::indicators::IndicatorFrame;

use super::{ActionKind, ActionRequest, PortfolioSnapshot};

/// An order the agent has submitted that has not reached a final status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenOrder {
    pub order_id: OrderId,
    pub action: ActionKind,
    pub order_type: OrderType,
    pub price: Option<f64>,
    pub remaining_qty: u64,
}

/// Upper bounds the engine will accept right now, at the quoted price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub reference_price: Option<f64>,
    pub max_buy_qty: u64,
    pub max_sell_qty: u64,
    pub max_short_qty: u64,
    pub max_short_cover_qty: u64,
    pub lot_size: u64,
    pub tick_size: f64,
    pub rules: Vec<String>,
}

/// Everything an agent knows at one decision point. This is also the
/// document sent to external decision providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionContext {
    pub agent_id: String,
    pub symbol: String,
    pub sim_time: SimTime,
    pub action_interval_ms: u64,
    pub market_open: bool,
    pub instrument: Instrument,
    pub portfolio: PortfolioSnapshot,
    pub quote: Option<Quote>,
    /// Oldest first.
    pub recent_bars: Vec<BarData>,
    pub book: Option<BookTopData>,
    pub indicators: Option<IndicatorFrame<f64>>,
    /// Newest first.
    pub news: Vec<CanonicalNewsItem>,
    pub fundamentals: Vec<CanonicalFundamentals>,
    pub events: Vec<DatedEvent>,
    pub open_orders: Vec<OpenOrder>,
    /// Reports received since the previous decision.
    pub recent_executions: Vec<ExecutionReport>,
    pub constraints: ConstraintSummary,
}

fn empty_snapshot() -> PortfolioSnapshot {
    PortfolioSnapshot {
        cash: 0.0,
        available_cash: 0.0,
        long_qty: 0,
        short_qty: 0,
        net_qty: 0,
        avg_entry_long: 0.0,
        avg_entry_short: 0.0,
        realized_pnl: 0.0,
        unrealized_pnl: 0.0,
        equity: 0.0,
        mark_price: None,
    }
}

const RULES: [&str; 5] = [
    "quantity is in units of the instrument and must be a positive multiple of lot_size",
    "LIMIT and STOP need a price on the tick grid; MARKET takes price null",
    "BUY and SHORT_COVER cost is held against available_cash until the order ends",
    "SELL is cut down to the long position not already being sold",
    "SHORT beyond the long position needs available_cash for the whole short exposure at the reference price",
];

/// Running picture of the market and the agent's own state, built from bus traffic.
#[derive(Debug, Clone)]
pub struct AgentView {
    agent_id: String,
    instrument: Instrument,
    history: usize,
    portfolio: Option<PortfolioSnapshot>,
    quote: Option<Quote>,
    bars: VecDeque<BarData>,
    book: Option<BookTopData>,
    indicators: Option<IndicatorFrame<f64>>,
    news: VecDeque<CanonicalNewsItem>,
    fundamentals: Vec<CanonicalFundamentals>,
    events: Vec<DatedEvent>,
    open: BTreeMap<OrderId, OpenOrder>,
    executions: Vec<ExecutionReport>,
}

impl AgentView {
    pub fn new(agent_id: &str, instrument: Instrument, history: usize) -> Self {
        AgentView {
            agent_id: agent_id.to_string(),
            instrument,
            history: history.max(1),
            portfolio: None,
            quote: None,
            bars: VecDeque::new(),
            book: None,
            indicators: None,
            news: VecDeque::new(),
            fundamentals: Vec::new(),
            events: Vec::new(),
            open: BTreeMap::new(),
            executions: Vec::new(),
        }
    }

    pub fn portfolio(&self) -> Option<&PortfolioSnapshot> {
        self.portfolio.as_ref()
    }

    pub fn on_market_data(&mut self, data: &MarketData) {
        match data {
            MarketData::Bar(bar) => {
                self.bars.push_back(bar.clone());
                while self.bars.len() > self.history {
                    self.bars.pop_front();
                }
            }
            MarketData::BookTop(book) => self.book = Some(book.clone()),
            MarketData::Indicators { frame, .. } => self.indicators = Some(frame.clone()),
            MarketData::Quote(q) => self.quote = Some(q.clone()),
        }
    }

    pub fn on_external_data(&mut self, data: &ExternalData) {
        match data {
            ExternalData::News { items, .. } => {
                for item in items {
                    self.news.push_front(item.clone());
                }
                self.news.truncate(self.history);
            }
            ExternalData::Fundamentals { items, .. } => self.fundamentals = items.clone(),
            ExternalData::Events { items, .. } => self.events = items.clone(),
        }
    }

    pub fn on_portfolio(&mut self, update: &PortfolioUpdate) {
        self.portfolio = Some(update.portfolio.clone());
    }

    pub fn on_submitted(&mut self, order_id: OrderId, req: &ActionRequest) {
        self.open.insert(
            order_id,
            OpenOrder {
                order_id,
                action: req.action,
                order_type: req.order_type,
                price: req.price,
                remaining_qty: req.quantity,
            },
        );
    }

    pub fn on_execution(&mut self, report: &ExecutionReport) {
        if report.status.is_final() || report.remaining_qty == 0 {
            self.open.remove(&report.order_id);
        } else if let Some(o) = self.open.get_mut(&report.order_id) {
            o.remaining_qty = report.remaining_qty;
        }
        self.executions.push(report.clone());
    }

    fn constraints(&self, portfolio: &PortfolioSnapshot) -> ConstraintSummary {
        let lot = self.instrument.lot_size;
        let floor_lot = |q: u64| q - q % lot;
        let pending = |a: ActionKind| -> u64 {
            self.open.values().filter(|o| o.action == a).map(|o| o.remaining_qty).sum()
        };
        let pending_sell = pending(ActionKind::Sell) + pending(ActionKind::Short);
        let free_long = portfolio.long_qty.saturating_sub(pending_sell);
        let reference = self.quote.as_ref().map(|q| q.price);
        let (max_buy, max_short, max_cover) = match reference {
            Some(px) if px > 0.0 => {
                let by_cash = portfolio.affordable(px, &self.instrument);
                let short_room = by_cash.saturating_sub(portfolio.short_qty + pending(ActionKind::Short));
                let cover = portfolio
                    .short_qty
                    .saturating_sub(pending(ActionKind::ShortCover))
                    .min(by_cash);
                (by_cash, free_long + floor_lot(short_room), cover)
            }
            _ => (0, free_long, 0),
        };
        ConstraintSummary {
            reference_price: reference,
            max_buy_qty: max_buy,
            max_sell_qty: free_long,
            max_short_qty: max_short,
            max_short_cover_qty: max_cover,
            lot_size: lot,
            tick_size: self.instrument.tick_size,
            rules: RULES.iter().map(|r| r.to_string()).collect(),
        }
    }

    /// Builds the context for a decision at `now` and starts a new execution window.
    pub fn context(&mut self, now: SimTime, action_interval_ms: u64, market_open: bool) -> DecisionContext {
        let portfolio = self.portfolio.clone().unwrap_or_else(empty_snapshot);
        DecisionContext {
            agent_id: self.agent_id.clone(),
            symbol: self.instrument.symbol.clone(),
            sim_time: now,
            action_interval_ms,
            market_open,
            instrument: self.instrument.clone(),
            constraints: self.constraints(&portfolio),
            portfolio,
            quote: self.quote.clone(),
            recent_bars: self.bars.iter().cloned().collect(),
            book: self.book.clone(),
            indicators: self.indicators.clone(),
            news: self.news.iter().cloned().collect(),
            fundamentals: self.fundamentals.clone(),
            events: self.events.clone(),
            open_orders: self.open.values().cloned().collect(),
            recent_executions: std::mem::take(&mut self.executions),
        }
    }
}
