use serde::{Deserialize, Serialize};

use super::{AgentId, Instrument, OrderId, Price, Side, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderType {
    Market,
    Limit,
    Stop,
}

/// An agent's order as it travels over the bus, with decimal prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub symbol: String,
    pub side: Side,
    pub order_type: OrderType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_price: Option<f64>,
    pub quantity: u64,
    pub submit_time: SimTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// Price condition of a validated order, on the tick grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "price")]
pub enum OrderKind {
    Market,
    Limit(Price),
    Stop(Price),
}

impl OrderKind {
    pub fn order_type(self) -> OrderType {
        match self {
            OrderKind::Market => OrderType::Market,
            OrderKind::Limit(_) => OrderType::Limit,
            OrderKind::Stop(_) => OrderType::Stop,
        }
    }

    pub fn price(self) -> Option<Price> {
        match self {
            OrderKind::Market => None,
            OrderKind::Limit(p) | OrderKind::Stop(p) => Some(p),
        }
    }
}

/// An order that passed [`validate_order`]; its invariants hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedOrder {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub kind: OrderKind,
    pub quantity: u64,
    pub submit_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectCode {
    PriceOnMarket,
    MissingLimitPrice,
    StopOnLimit,
    MissingStopPrice,
    LimitOnStop,
    TickMisaligned,
    NonPositivePrice,
    ZeroQuantity,
    LotMisaligned,
    WrongInstrument,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::PriceOnMarket => "PRICE_ON_MARKET",
            RejectCode::MissingLimitPrice => "MISSING_LIMIT_PRICE",
            RejectCode::StopOnLimit => "STOP_ON_LIMIT",
            RejectCode::MissingStopPrice => "MISSING_STOP_PRICE",
            RejectCode::LimitOnStop => "LIMIT_ON_STOP",
            RejectCode::TickMisaligned => "TICK_MISALIGNED",
            RejectCode::NonPositivePrice => "NON_POSITIVE_PRICE",
            RejectCode::ZeroQuantity => "ZERO_QUANTITY",
            RejectCode::LotMisaligned => "LOT_MISALIGNED",
            RejectCode::WrongInstrument => "WRONG_INSTRUMENT",
        }
    }
}

fn grid_price(value: f64, instrument: &Instrument) -> Result<Price, RejectCode> {
    if !(value > 0.0) {
        return Err(RejectCode::NonPositivePrice);
    }
    instrument.to_ticks(value).ok_or(RejectCode::TickMisaligned)
}

/// Checks the order invariants and maps prices onto the tick grid.
///
/// Rejection is an ordinary value carrying a machine-readable code.
pub fn validate_order(order: &Order, instrument: &Instrument) -> Result<PricedOrder, RejectCode> {
    if order.symbol != instrument.symbol {
        return Err(RejectCode::WrongInstrument);
    }
    if order.quantity == 0 {
        return Err(RejectCode::ZeroQuantity);
    }
    if !order.quantity.is_multiple_of(instrument.lot_size) {
        return Err(RejectCode::LotMisaligned);
    }
    let kind = match order.order_type {
        OrderType::Market => {
            if order.limit_price.is_some() || order.stop_price.is_some() {
                return Err(RejectCode::PriceOnMarket);
            }
            OrderKind::Market
        }
        OrderType::Limit => {
            if order.stop_price.is_some() {
                return Err(RejectCode::StopOnLimit);
            }
            let limit = order.limit_price.ok_or(RejectCode::MissingLimitPrice)?;
            OrderKind::Limit(grid_price(limit, instrument)?)
        }
        OrderType::Stop => {
            if order.limit_price.is_some() {
                return Err(RejectCode::LimitOnStop);
            }
            let stop = order.stop_price.ok_or(RejectCode::MissingStopPrice)?;
            OrderKind::Stop(grid_price(stop, instrument)?)
        }
    };
    Ok(PricedOrder {
        order_id: order.order_id,
        agent_id: order.agent_id.clone(),
        side: order.side,
        kind,
        quantity: order.quantity,
        submit_time: order.submit_time,
    })
}
