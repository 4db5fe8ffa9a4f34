use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Candle, Instrument, OrderId, Price, Side, SimTime, Timeframe};
use crate::matching::{BookEvent, BookEventKind};

use super::{CanonicalFundamentals, CanonicalNewsItem, DataError};

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// A run of missing bars between two loaded ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub after: SimTime,
    pub missing_bars: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvLoad {
    pub candles: Vec<Candle>,
    pub gaps: Vec<Gap>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct BarRow {
    timestamp_ms: u64,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

const OHLCV_HEADER: [&str; 6] = ["timestamp_ms", "open", "high", "low", "close", "volume"];

/// Reads `timestamp_ms,open,high,low,close,volume` bars.
///
/// Prices are snapped to the instrument grid. Out-of-order rows are sorted
/// with a warning; a repeated timestamp is an invalid bar.
pub fn load_ohlcv_csv(path: &Path, instrument: &Instrument, timeframe: Timeframe) -> Result<OhlcvLoad, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != OHLCV_HEADER {
        return Err(parse_err(path, 1, format!("expected header {}", OHLCV_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    let mut off_grid = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: BarRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let mut snap = |v: f64| match instrument.to_ticks(v) {
            Some(p) => p,
            None => {
                off_grid += 1;
                instrument.round_to_ticks(v)
            }
        };
        let (o, h, l, c) = (snap(row.open), snap(row.high), snap(row.low), snap(row.close));
        let candle = Candle {
            symbol: instrument.symbol.clone(),
            open: o,
            high: h,
            low: l,
            close: c,
            volume: row.volume,
            bar_start: SimTime(row.timestamp_ms),
            timeframe,
        };
        candle.check().map_err(|e| DataError::InvalidBar {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        rows.push((line, candle));
    }

    let mut warnings = Vec::new();
    if off_grid > 0 {
        warnings.push(format!("{off_grid} prices were not on the {} tick grid and were rounded", instrument.tick_size));
    }
    if rows.windows(2).any(|w| w[1].1.bar_start < w[0].1.bar_start) {
        warnings.push("rows were not in time order and have been sorted".to_string());
        rows.sort_by_key(|(_, c)| c.bar_start);
    }
    for w in rows.windows(2) {
        if w[0].1.bar_start == w[1].1.bar_start {
            return Err(DataError::InvalidBar {
                path: path.display().to_string(),
                line: w[1].0,
                message: format!("duplicate timestamp {}", w[1].1.bar_start.0),
            });
        }
    }
    let candles: Vec<Candle> = rows.into_iter().map(|(_, c)| c).collect();
    let gaps = find_gaps(&candles, timeframe);
    Ok(OhlcvLoad { candles, gaps, warnings })
}

/// Spots missing bars on a regular clock. Session-bounded data (overnight,
/// weekends) shows up here too; callers decide what matters.
pub fn find_gaps(candles: &[Candle], timeframe: Timeframe) -> Vec<Gap> {
    if timeframe.0 == 0 {
        return Vec::new();
    }
    candles
        .windows(2)
        .filter_map(|w| {
            let step = w[1].bar_start.0 - w[0].bar_start.0;
            (step > timeframe.0).then(|| Gap {
                after: w[0].bar_start,
                missing_bars: step / timeframe.0 - 1 + u64::from(step % timeframe.0 != 0),
            })
        })
        .filter(|g| g.missing_bars > 0)
        .collect()
}

pub fn write_ohlcv_csv<W: Write>(out: W, candles: &[Candle], instrument: &Instrument) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Write(e.to_string());
    w.write_record(OHLCV_HEADER).map_err(io)?;
    for c in candles {
        w.write_record([
            c.bar_start.0.to_string(),
            instrument.format_price(c.open),
            instrument.format_price(c.high),
            instrument.format_price(c.low),
            instrument.format_price(c.close),
            c.volume.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DataError::Write(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventDialect {
    Native,
    Lobster,
}

/// LOBSTER message files carry seconds after midnight; this anchors them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LobsterOptions {
    pub midnight_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLoad {
    pub events: Vec<BookEvent>,
    /// Rows left out, by reason.
    pub skipped: BTreeMap<String, u64>,
}

#[derive(Debug, Deserialize)]
struct NativeRow {
    time_ms: u64,
    kind: String,
    order_id: u64,
    side: String,
    price: f64,
    qty: u64,
}

pub fn load_order_events(
    path: &Path,
    dialect: EventDialect,
    instrument: &Instrument,
    lobster: LobsterOptions,
) -> Result<EventLoad, DataError> {
    match dialect {
        EventDialect::Native => load_native_events(path, instrument),
        EventDialect::Lobster => load_lobster(path, instrument, lobster),
    }
}

fn load_native_events(path: &Path, instrument: &Instrument) -> Result<EventLoad, DataError> {
    const HEADER: [&str; 6] = ["time_ms", "kind", "order_id", "side", "price", "qty"];
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(path, 1, format!("expected header {}", HEADER.join(","))));
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: NativeRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let kind = match row.kind.as_str() {
            "add" => BookEventKind::Add,
            "cancel" => BookEventKind::Cancel,
            "execute" => BookEventKind::Execute,
            other => return Err(parse_err(path, line, format!("unknown kind {other:?}"))),
        };
        let side = match row.side.as_str() {
            "buy" => Side::Buy,
            "sell" => Side::Sell,
            other => return Err(parse_err(path, line, format!("unknown side {other:?}"))),
        };
        let price = instrument
            .to_ticks(row.price)
            .ok_or_else(|| parse_err(path, line, format!("price {} is off the tick grid", row.price)))?;
        events.push(BookEvent {
            event_time: SimTime(row.time_ms),
            kind,
            order_id: OrderId(row.order_id),
            side,
            price,
            quantity: row.qty,
        });
    }
    Ok(EventLoad {
        events,
        skipped: BTreeMap::new(),
    })
}

fn load_lobster(path: &Path, instrument: &Instrument, opts: LobsterOptions) -> Result<EventLoad, DataError> {
    let reader = BufReader::new(open(path)?);
    let mut events = Vec::new();
    let mut skipped = BTreeMap::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let text = line.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = text.split(',').map(str::trim).collect();
        if cols.len() < 6 {
            return Err(parse_err(path, line_no, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |i: usize, what: &str| {
            cols[i]
                .parse::<f64>()
                .map_err(|e| parse_err(path, line_no, format!("{what}: {e}")))
        };
        let seconds = num(0, "time")?;
        let code = cols[1]
            .parse::<i64>()
            .map_err(|e| parse_err(path, line_no, format!("type: {e}")))?;
        let kind = match code {
            1 => BookEventKind::Add,
            2 | 3 => BookEventKind::Cancel,
            4 => BookEventKind::Execute,
            5 => {
                *skipped.entry("hidden_execution".to_string()).or_default() += 1;
                continue;
            }
            6 => {
                *skipped.entry("cross_trade".to_string()).or_default() += 1;
                continue;
            }
            7 => {
                *skipped.entry("trading_halt".to_string()).or_default() += 1;
                continue;
            }
            other => {
                *skipped.entry(format!("unknown_type_{other}")).or_default() += 1;
                continue;
            }
        };
        let order_id = cols[2]
            .parse::<u64>()
            .map_err(|e| parse_err(path, line_no, format!("order id: {e}")))?;
        let size = cols[3]
            .parse::<u64>()
            .map_err(|e| parse_err(path, line_no, format!("size: {e}")))?;
        let raw_price = cols[4]
            .parse::<i64>()
            .map_err(|e| parse_err(path, line_no, format!("price: {e}")))?;
        let side = match cols[5] {
            "1" => Side::Buy,
            "-1" => Side::Sell,
            other => return Err(parse_err(path, line_no, format!("direction {other:?}"))),
        };
        let price: Price = instrument
            .to_ticks(raw_price as f64 / 10_000.0)
            .ok_or_else(|| parse_err(path, line_no, format!("price {raw_price} is off the tick grid")))?;
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(parse_err(path, line_no, "time must be non-negative"));
        }
        events.push(BookEvent {
            event_time: SimTime(opts.midnight_ms + (seconds * 1000.0).round() as u64),
            kind,
            order_id: OrderId(order_id),
            side,
            price,
            // A full deletion removes whatever is left, whatever the file says.
            quantity: if code == 3 { 0 } else { size },
        });
    }
    Ok(EventLoad { events, skipped })
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let text = line.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&text).map_err(|e| parse_err(path, line_no, e.to_string()))?);
    }
    Ok(out)
}

/// One JSON object per line; output sorted by publication time (stable).
pub fn load_news_jsonl(path: &Path) -> Result<Vec<CanonicalNewsItem>, DataError> {
    let mut items: Vec<CanonicalNewsItem> = load_jsonl(path)?;
    items.sort_by_key(|i| i.published_at);
    Ok(items)
}

pub fn load_fundamentals_jsonl(path: &Path) -> Result<Vec<CanonicalFundamentals>, DataError> {
    let mut items: Vec<CanonicalFundamentals> = load_jsonl(path)?;
    items.sort_by(|a, b| a.as_of.cmp(&b.as_of).then_with(|| a.symbol.cmp(&b.symbol)));
    Ok(items)
}
