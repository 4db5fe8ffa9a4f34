use crate::agents::ActionKind;
use crate::bus::ExecStatus;
use crate::domain::{AgentId, Counterparty, Instrument, Liquidity, OrderId, OrderType, Price, SimTime};

/// What happened to an agent order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogEvent {
    Status(ExecStatus),
    Fill,
}

impl LogEvent {
    fn as_str(self) -> &'static str {
        match self {
            LogEvent::Status(s) => s.as_str(),
            LogEvent::Fill => "fill",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub sim_time: SimTime,
    pub event: LogEvent,
    pub agent_id: AgentId,
    pub order_id: OrderId,
    pub action: ActionKind,
    pub order_type: OrderType,
    /// Fill price, or the order's limit/stop level.
    pub price: Option<Price>,
    pub quantity: u64,
    pub remaining: u64,
    pub liquidity: Option<Liquidity>,
    pub counterparty: Option<Counterparty>,
    pub reason: Option<String>,
}

/// Every order placement, status change and execution of a run, in the
/// order the engine produced them. Rendered as CSV.
#[derive(Debug, Clone, Default)]
pub struct TradeLog {
    rows: Vec<LogRow>,
}

const HEADER: [&str; 13] = [
    "row",
    "sim_time",
    "event",
    "agent_id",
    "order_id",
    "action",
    "order_type",
    "price",
    "quantity",
    "remaining",
    "liquidity",
    "counterparty",
    "reason",
];

impl TradeLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn fills(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.event == LogEvent::Fill)
    }

    pub fn to_csv(&self, instrument: &Instrument) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("write to memory");
        for (i, r) in self.rows.iter().enumerate() {
            let liquidity = match r.liquidity {
                Some(Liquidity::Maker) => "maker",
                Some(Liquidity::Taker) => "taker",
                None => "",
            };
            let counterparty = match r.counterparty {
                Some(Counterparty::Order(id)) => id.0.to_string(),
                Some(Counterparty::Bar) => "bar".into(),
                Some(Counterparty::Exogenous) => "exogenous".into(),
                None => String::new(),
            };
            let order_type = match r.order_type {
                OrderType::Market => "market",
                OrderType::Limit => "limit",
                OrderType::Stop => "stop",
            };
            w.write_record([
                i.to_string(),
                r.sim_time.0.to_string(),
                r.event.as_str().to_string(),
                r.agent_id.to_string(),
                r.order_id.0.to_string(),
                r.action.as_str().to_string(),
                order_type.to_string(),
                r.price.map(|p| instrument.format_price(p)).unwrap_or_default(),
                r.quantity.to_string(),
                r.remaining.to_string(),
                liquidity.to_string(),
                counterparty,
                r.reason.clone().unwrap_or_default(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}
