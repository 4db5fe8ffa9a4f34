use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::domain::{AgentId, Order, OrderId, OrderType, Side, SimTime};
use crate::scalar::Scalar;

use super::PortfolioState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Buy,
    Sell,
    Short,
    ShortCover,
}

impl ActionKind {
    pub fn side(self) -> Side {
        match self {
            ActionKind::Buy | ActionKind::ShortCover => Side::Buy,
            ActionKind::Sell | ActionKind::Short => Side::Sell,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Buy => "BUY",
            ActionKind::Sell => "SELL",
            ActionKind::Short => "SHORT",
            ActionKind::ShortCover => "SHORT_COVER",
        }
    }
}

mod upper_order_type {
    use super::*;

    pub fn serialize<S: Serializer>(t: &OrderType, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match t {
            OrderType::Market => "MARKET",
            OrderType::Limit => "LIMIT",
            OrderType::Stop => "STOP",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OrderType, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.as_str() {
            "MARKET" => Ok(OrderType::Market),
            "LIMIT" => Ok(OrderType::Limit),
            "STOP" => Ok(OrderType::Stop),
            other => Err(serde::de::Error::unknown_variant(other, &["MARKET", "LIMIT", "STOP"])),
        }
    }
}

/// One trading instruction in the decision-provider output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub action: ActionKind,
    #[serde(rename = "orderType", with = "upper_order_type")]
    pub order_type: OrderType,
    /// Limit or stop level; null for market orders.
    #[serde(default)]
    pub price: Option<f64>,
    pub quantity: u64,
    #[serde(default)]
    pub explanation: String,
}

impl ActionRequest {
    pub fn market(action: ActionKind, quantity: u64, explanation: impl Into<String>) -> Self {
        ActionRequest {
            action,
            order_type: OrderType::Market,
            price: None,
            quantity,
            explanation: explanation.into(),
        }
    }

    pub fn to_order(&self, order_id: OrderId, agent_id: AgentId, symbol: &str, submit_time: SimTime) -> Order {
        let (limit_price, stop_price) = match self.order_type {
            OrderType::Market => (self.price, None),
            OrderType::Limit => (self.price, None),
            OrderType::Stop => (None, self.price),
        };
        Order {
            order_id,
            agent_id,
            symbol: symbol.to_string(),
            side: self.action.side(),
            order_type: self.order_type,
            limit_price,
            stop_price,
            quantity: self.quantity,
            submit_time,
            explanation: (!self.explanation.is_empty()).then(|| self.explanation.clone()),
        }
    }
}

/// Parses a provider reply: a JSON array of [`ActionRequest`] with exact field names.
pub fn parse_actions(text: &str) -> Result<Vec<ActionRequest>, serde_json::Error> {
    serde_json::from_str(text.trim())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintReject {
    #[error("INSUFFICIENT_CASH")]
    InsufficientCash,
    #[error("NO_POSITION")]
    NoPosition,
    #[error("NO_REFERENCE_PRICE")]
    NoReferencePrice,
}

impl ConstraintReject {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintReject::InsufficientCash => "INSUFFICIENT_CASH",
            ConstraintReject::NoPosition => "NO_POSITION",
            ConstraintReject::NoReferencePrice => "NO_REFERENCE_PRICE",
        }
    }
}

/// Quantities and cash tied up by orders that have not finished yet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Commitments<S> {
    /// Notional held back for buy-side orders.
    pub reserved_cash: S,
    /// Lots on open sell-side orders (SELL and SHORT).
    pub pending_sell: u64,
    /// Lots on open buy-side orders (BUY and SHORT_COVER).
    pub pending_buy: u64,
    /// Lots that open SHORT orders would add beyond closing longs.
    pub pending_short: u64,
}

/// An order that passed the portfolio rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approved<S> {
    pub quantity: u64,
    /// Cash to hold back until the order finishes (buy side only).
    pub reserve: S,
    /// Lots this order adds to the short book.
    pub short_part: u64,
    pub clipped: bool,
}

/// Applies the portfolio rules to one request.
///
/// `price` is the order's limit or stop level (absent for market orders, which
/// are costed at `ref_price`). All money values share the portfolio's units.
pub fn enforce_constraints<S: Scalar>(
    action: ActionKind,
    quantity: u64,
    price: Option<S>,
    portfolio: &PortfolioState<S>,
    commitments: &Commitments<S>,
    ref_price: Option<S>,
) -> Result<Approved<S>, ConstraintReject> {
    let px = price.or(ref_price).ok_or(ConstraintReject::NoReferencePrice)?;
    if px <= S::zero() {
        return Err(ConstraintReject::NoReferencePrice);
    }
    let available = portfolio.cash - commitments.reserved_cash;
    let approved = |qty: u64, reserve: S, short_part: u64| Approved {
        quantity: qty,
        reserve,
        short_part,
        clipped: qty != quantity,
    };
    match action {
        ActionKind::Buy => {
            let cost = S::from_qty(quantity) * px;
            if cost > available {
                return Err(ConstraintReject::InsufficientCash);
            }
            Ok(approved(quantity, cost, 0))
        }
        ActionKind::Sell => {
            let free = portfolio.long_qty.saturating_sub(commitments.pending_sell);
            let qty = quantity.min(free);
            if qty == 0 {
                return Err(ConstraintReject::NoPosition);
            }
            Ok(approved(qty, S::zero(), 0))
        }
        ActionKind::Short => {
            let closes_long = quantity.min(portfolio.long_qty.saturating_sub(commitments.pending_sell));
            let short_part = quantity - closes_long;
            if short_part > 0 {
                let mark = ref_price.unwrap_or(px);
                let existing = S::from_qty(portfolio.short_qty + commitments.pending_short) * mark;
                if S::from_qty(short_part) * px + existing > available {
                    return Err(ConstraintReject::InsufficientCash);
                }
            }
            Ok(approved(quantity, S::zero(), short_part))
        }
        ActionKind::ShortCover => {
            let free = portfolio.short_qty.saturating_sub(commitments.pending_buy);
            let qty = quantity.min(free);
            if qty == 0 {
                return Err(ConstraintReject::NoPosition);
            }
            let affordable = if available > S::zero() {
                (available / px).floor_u64()
            } else {
                0
            };
            let qty = qty.min(affordable);
            if qty == 0 {
                return Err(ConstraintReject::InsufficientCash);
            }
            Ok(approved(qty, S::from_qty(qty) * px, 0))
        }
    }
}

trait FloorU64 {
    fn floor_u64(self) -> u64;
}

impl<S: Scalar> FloorU64 for S {
    fn floor_u64(self) -> u64 {
        // to_u64 truncates toward zero, which is floor for non-negative values.
        self.to_u64().unwrap_or(u64::MAX)
    }
}
