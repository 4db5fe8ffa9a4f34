//! Candle-level loop: one step per bar, fills from the synthetic intra-bar path.

use crate::bus::{external_topic, market_topic, BarData, ExecStatus, MarketData, Payload, Quote, QuoteSource};
use crate::candles::{CandleBook, SessionCalendar, SessionEvent};
use crate::data::ExternalData;
use crate::domain::{Candle, Counterparty, Instrument, Liquidity, SimTime};
use crate::indicators::{IndicatorEngine, Ohlc};

use super::engine::Engine;
use super::SimError;

pub(super) fn bar_data(candle: &Candle, instrument: &Instrument) -> BarData {
    let px = |p| instrument.price_value(p);
    BarData {
        symbol: candle.symbol.clone(),
        bar_start: candle.bar_start,
        timeframe: candle.timeframe,
        open: px(candle.open),
        high: px(candle.high),
        low: px(candle.low),
        close: px(candle.close),
        volume: candle.volume,
    }
}

impl Engine {
    /// Publishes a completed bar and the indicator frame it produces.
    pub(super) fn publish_bar(
        &mut self,
        candle: &Candle,
        indicators: &mut IndicatorEngine<f64>,
        book: Option<&crate::matching::Ladder>,
    ) -> Result<(), SimError> {
        let topic = market_topic(&self.instrument.symbol);
        let ohlc = Ohlc::from_candle(candle, &self.instrument);
        let frame = indicators.update(&ohlc, candle.bar_start, candle.end(), book);
        let bar = bar_data(candle, &self.instrument);
        self.publish(&topic, Payload::MarketData(MarketData::Bar(bar)))?;
        let symbol = self.instrument.symbol.clone();
        self.publish(&topic, Payload::MarketData(MarketData::Indicators { symbol, frame }))
    }

    /// News published since the last call, on the external topic.
    pub(super) fn publish_news(&mut self, after: Option<SimTime>) -> Result<(), SimError> {
        let symbol = self.instrument.symbol.clone();
        let items = self.store.news_between(&symbol, after, self.clock);
        if items.is_empty() {
            return Ok(());
        }
        let topic = external_topic(&symbol);
        self.publish(&topic, Payload::ExternalData(ExternalData::News { symbol, items }))
    }

    pub(super) fn run_candles(
        &mut self,
        bars: &[Candle],
        calendar: SessionCalendar,
        interval_ms: u64,
        indicators: &mut IndicatorEngine<f64>,
    ) -> Result<(), SimError> {
        let (Some(first), Some(last)) = (bars.first(), bars.last()) else {
            return Err(SimError::Data("no bars inside the session window".into()));
        };
        let topic = market_topic(&self.instrument.symbol);
        let mut book = CandleBook::new(calendar);
        let mut next_tick = first.bar_start;
        let mut news_after = None;
        self.set_clock(first.bar_start);
        self.broadcast_portfolios()?;

        for (k, bar) in bars.iter().enumerate() {
            let now = bar.bar_start;
            self.set_clock(now);
            let advance = book.advance_session(now);
            if advance.events.iter().any(|e| matches!(e, SessionEvent::Opened(_))) {
                indicators.start_session();
            }
            for order in advance.expired {
                self.settle(order.order_id, Vec::new(), Some((ExecStatus::SessionExpired, "SESSION_CLOSED".into())), false)?;
            }
            self.flush_deferred()?;
            if k > 0 {
                self.publish_bar(&bars[k - 1], indicators, None)?;
            }
            self.publish_news(news_after)?;
            news_after = Some(now);
            let quote = Quote {
                symbol: self.instrument.symbol.clone(),
                as_of: now,
                price: self.instrument.price_value(bar.open),
                source: QuoteSource::Open,
            };
            self.publish(&topic, Payload::MarketData(MarketData::Quote(quote)))?;

            if now >= next_tick {
                next_tick = now + interval_ms;
                for env in self.barrier(book.market_open())? {
                    match &env.payload {
                        Payload::OrderSubmit { .. } => {
                            if let Some(admitted) = self.admit(&env, Some(bar.open))? {
                                book.submit(admitted.order);
                            }
                        }
                        Payload::OrderCancel { .. } => match self.cancel_target(&env) {
                            Some(id) => {
                                book.cancel(id);
                                self.settle(id, Vec::new(), Some((ExecStatus::Canceled, "CANCELED_BY_AGENT".into())), false)?;
                            }
                            None => self.reject_cancel(&env)?,
                        },
                        _ => {}
                    }
                }
                self.flush_portfolios()?;
            }

            for fill in book.resolve(bar) {
                if !self.live.contains_key(&fill.order_id) {
                    continue;
                }
                // Gaps can move the execution price past what the order was sized for.
                let allowed = self.allowance(fill.order_id, fill.price).min(fill.quantity);
                let mut reports = Vec::new();
                if allowed > 0 {
                    reports.push(self.fill(fill.order_id, allowed, fill.price, fill.exec_time, Liquidity::Taker, Counterparty::Bar)?);
                }
                let end = (allowed < fill.quantity).then(|| (ExecStatus::Canceled, "INSUFFICIENT_FUNDS_AT_FILL".to_string()));
                self.settle(fill.order_id, reports, end, true)?;
                for id in self.stale_exits() {
                    book.cancel(id);
                    self.settle(id, Vec::new(), Some((ExecStatus::Canceled, "POSITION_CHANGED".into())), true)?;
                }
            }
            self.mark = Some(bar.close);
            self.record_equity(bar.end())?;
        }

        self.set_clock(last.end());
        self.flush_deferred()?;
        self.publish_bar(last, indicators, None)?;
        let mut leftovers: Vec<_> = book.finish().expired.into_iter().map(|o| o.order_id).collect();
        leftovers.extend(book.active().iter().chain(book.queued()).map(|o| o.order_id));
        for id in leftovers {
            self.settle(id, Vec::new(), Some((ExecStatus::SessionExpired, "END_OF_DATA".into())), false)?;
        }
        self.flush_portfolios()
    }
}
