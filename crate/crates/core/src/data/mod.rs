//! Offline data adapters. Every input is a file mapped onto one canonical
//! schema, and nothing is released to agents ahead of simulation time.

mod loaders;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{Instrument, SimTime, Timeframe};

pub use loaders::{
    find_gaps, load_fundamentals_jsonl, load_news_jsonl, load_ohlcv_csv, load_order_events,
    write_ohlcv_csv, EventDialect, EventLoad, Gap, LobsterOptions, OhlcvLoad,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PARSE_ERROR {path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("INVALID_BAR {path}:{line}: {message}")]
    InvalidBar { path: String, line: u64, message: String },
    #[error("DUPLICATE_PROVIDER: {0}")]
    DuplicateProvider(String),
    #[error("UNKNOWN_PROVIDER: {0}")]
    UnknownProvider(String),
    #[error("provider {provider} yields {yields:?}, not {wanted:?}")]
    WrongStream {
        provider: String,
        yields: StreamKind,
        wanted: StreamKind,
    },
    #[error("write failed: {0}")]
    Write(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalNewsItem {
    pub published_at: SimTime,
    pub symbols: Vec<String>,
    pub headline: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl CanonicalNewsItem {
    pub fn mentions(&self, symbol: &str) -> bool {
        self.symbols.iter().any(|s| s == symbol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorporateEventKind {
    Split,
    Dividend,
    Earnings,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorporateEvent {
    pub kind: CorporateEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective: Option<SimTime>,
    /// Split ratio, dividend per share, or reported EPS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFundamentals {
    pub as_of: SimTime,
    pub symbol: String,
    #[serde(default)]
    pub ratios: BTreeMap<String, f64>,
    #[serde(default)]
    pub events: Vec<CorporateEvent>,
    /// Fields this schema does not know about, kept verbatim.
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

/// A corporate event stamped with the time it became known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedEvent {
    pub known_at: SimTime,
    pub symbol: String,
    pub event: CorporateEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataQuery {
    pub symbol: String,
    /// `news`, `fundamentals`, or `events`.
    pub kind: String,
    pub from: SimTime,
    pub to: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExternalData {
    News { symbol: String, items: Vec<CanonicalNewsItem> },
    Fundamentals { symbol: String, items: Vec<CanonicalFundamentals> },
    Events { symbol: String, items: Vec<DatedEvent> },
}

impl ExternalData {
    /// Latest timestamp carried by the payload.
    pub fn latest_time(&self) -> Option<SimTime> {
        match self {
            ExternalData::News { items, .. } => items.iter().map(|i| i.published_at).max(),
            ExternalData::Fundamentals { items, .. } => items.iter().map(|i| i.as_of).max(),
            ExternalData::Events { items, .. } => items.iter().map(|i| i.known_at).max(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            ExternalData::News { items, .. } => items.is_empty(),
            ExternalData::Fundamentals { items, .. } => items.is_empty(),
            ExternalData::Events { items, .. } => items.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "code", content = "detail")]
pub enum QueryError {
    #[error("UNKNOWN_KIND: {0}")]
    UnknownKind(String),
    #[error("FUTURE_WINDOW: window ends at {to} but the clock is at {now}")]
    FutureWindow { to: u64, now: u64 },
    #[error("BAD_WINDOW: from {from} is after to {to}")]
    BadWindow { from: u64, to: u64 },
}

/// News and fundamentals held in memory, queried by symbol and time window.
#[derive(Debug, Clone, Default)]
pub struct ExternalStore {
    news: Vec<CanonicalNewsItem>,
    fundamentals: Vec<CanonicalFundamentals>,
}

impl ExternalStore {
    pub fn new(mut news: Vec<CanonicalNewsItem>, mut fundamentals: Vec<CanonicalFundamentals>) -> Self {
        news.sort_by_key(|n| n.published_at);
        fundamentals.sort_by_key(|f| f.as_of);
        ExternalStore { news, fundamentals }
    }

    /// Items for `symbol` published in `(after, up_to]`.
    pub fn news_between(&self, symbol: &str, after: Option<SimTime>, up_to: SimTime) -> Vec<CanonicalNewsItem> {
        let start = match after {
            Some(t) => self.news.partition_point(|n| n.published_at <= t),
            None => 0,
        };
        let end = self.news.partition_point(|n| n.published_at <= up_to);
        self.news[start..end.max(start)]
            .iter()
            .filter(|n| n.mentions(symbol))
            .cloned()
            .collect()
    }

    /// Answers a query made at simulation time `now`. Windows are inclusive.
    pub fn query(&self, q: &DataQuery, now: SimTime) -> Result<ExternalData, QueryError> {
        if q.to > now {
            return Err(QueryError::FutureWindow { to: q.to.0, now: now.0 });
        }
        if q.from > q.to {
            return Err(QueryError::BadWindow { from: q.from.0, to: q.to.0 });
        }
        let in_window = |t: SimTime| t >= q.from && t <= q.to;
        let symbol = q.symbol.clone();
        match q.kind.as_str() {
            "news" => Ok(ExternalData::News {
                items: self
                    .news
                    .iter()
                    .filter(|n| in_window(n.published_at) && n.mentions(&symbol))
                    .cloned()
                    .collect(),
                symbol,
            }),
            "fundamentals" => Ok(ExternalData::Fundamentals {
                items: self
                    .fundamentals
                    .iter()
                    .filter(|f| in_window(f.as_of) && f.symbol == symbol)
                    .cloned()
                    .collect(),
                symbol,
            }),
            "events" => Ok(ExternalData::Events {
                items: self
                    .fundamentals
                    .iter()
                    .filter(|f| in_window(f.as_of) && f.symbol == symbol)
                    .flat_map(|f| {
                        f.events.iter().map(|e| DatedEvent {
                            known_at: f.as_of,
                            symbol: f.symbol.clone(),
                            event: e.clone(),
                        })
                    })
                    .collect(),
                symbol,
            }),
            other => Err(QueryError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Bars,
    OrderEvents,
    News,
    Fundamentals,
}

/// What an adapter needs to know about the run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadContext {
    pub instrument: Instrument,
    pub timeframe: Timeframe,
    pub lobster: LobsterOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Bars(OhlcvLoad),
    OrderEvents(EventLoad),
    News(Vec<CanonicalNewsItem>),
    Fundamentals(Vec<CanonicalFundamentals>),
}

impl Dataset {
    pub fn kind(&self) -> StreamKind {
        match self {
            Dataset::Bars(_) => StreamKind::Bars,
            Dataset::OrderEvents(_) => StreamKind::OrderEvents,
            Dataset::News(_) => StreamKind::News,
            Dataset::Fundamentals(_) => StreamKind::Fundamentals,
        }
    }
}

pub type LoadFn = Arc<dyn Fn(&Path, &LoadContext) -> Result<Dataset, DataError> + Send + Sync>;

/// A named file format and the function that maps it to canonical records.
#[derive(Clone)]
pub struct AdapterDescriptor {
    pub provider: String,
    pub input_format: String,
    pub yields: StreamKind,
    pub load: LoadFn,
}

impl std::fmt::Debug for AdapterDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterDescriptor")
            .field("provider", &self.provider)
            .field("input_format", &self.input_format)
            .field("yields", &self.yields)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdapterRegistry {
    adapters: BTreeMap<String, AdapterDescriptor>,
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the bundled file adapters.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        let builtin = |provider: &str, format: &str, yields, load: LoadFn| AdapterDescriptor {
            provider: provider.to_string(),
            input_format: format.to_string(),
            yields,
            load,
        };
        let all = [
            builtin(
                "ohlcv_csv",
                "csv: timestamp_ms,open,high,low,close,volume",
                StreamKind::Bars,
                Arc::new(|p, cx| load_ohlcv_csv(p, &cx.instrument, cx.timeframe).map(Dataset::Bars)),
            ),
            builtin(
                "native_events",
                "csv: time_ms,kind,order_id,side,price,qty",
                StreamKind::OrderEvents,
                Arc::new(|p, cx| {
                    load_order_events(p, EventDialect::Native, &cx.instrument, cx.lobster).map(Dataset::OrderEvents)
                }),
            ),
            builtin(
                "lobster",
                "csv without header: time,type,order_id,size,price,direction",
                StreamKind::OrderEvents,
                Arc::new(|p, cx| {
                    load_order_events(p, EventDialect::Lobster, &cx.instrument, cx.lobster).map(Dataset::OrderEvents)
                }),
            ),
            builtin(
                "news_jsonl",
                "jsonl: published_at,symbols,headline,summary,source,url",
                StreamKind::News,
                Arc::new(|p, _| load_news_jsonl(p).map(Dataset::News)),
            ),
            builtin(
                "fundamentals_jsonl",
                "jsonl: as_of,symbol,ratios,events,...",
                StreamKind::Fundamentals,
                Arc::new(|p, _| load_fundamentals_jsonl(p).map(Dataset::Fundamentals)),
            ),
        ];
        for d in all {
            r.register(d).expect("builtin names are unique");
        }
        r
    }

    pub fn register(&mut self, descriptor: AdapterDescriptor) -> Result<(), DataError> {
        if self.adapters.contains_key(&descriptor.provider) {
            return Err(DataError::DuplicateProvider(descriptor.provider));
        }
        self.adapters.insert(descriptor.provider.clone(), descriptor);
        Ok(())
    }

    pub fn get(&self, provider: &str) -> Option<&AdapterDescriptor> {
        self.adapters.get(provider)
    }

    pub fn providers(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }

    pub fn load(&self, provider: &str, path: &Path, cx: &LoadContext) -> Result<Dataset, DataError> {
        let adapter = self
            .get(provider)
            .ok_or_else(|| DataError::UnknownProvider(provider.to_string()))?;
        (adapter.load)(path, cx)
    }

    /// Like [`Self::load`] but insists on one stream kind.
    pub fn load_expecting(
        &self,
        provider: &str,
        wanted: StreamKind,
        path: &Path,
        cx: &LoadContext,
    ) -> Result<Dataset, DataError> {
        let adapter = self
            .get(provider)
            .ok_or_else(|| DataError::UnknownProvider(provider.to_string()))?;
        if adapter.yields != wanted {
            return Err(DataError::WrongStream {
                provider: provider.to_string(),
                yields: adapter.yields,
                wanted,
            });
        }
        (adapter.load)(path, cx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;
    use crate::domain::Side;
    use crate::matching::BookEventKind;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn inst() -> Instrument {
        Instrument::equity("NVDA")
    }

    #[test]
    fn ohlcv_loads_and_sorts() {
        let f = file("timestamp_ms,open,high,low,close,volume\n120000,10,11,9,10.5,100\n0,10,10.5,9.5,10,50\n60000,10,10.2,9.9,10.1,70\n");
        let load = load_ohlcv_csv(f.path(), &inst(), Timeframe::MINUTE).unwrap();
        let times: Vec<u64> = load.candles.iter().map(|c| c.bar_start.0).collect();
        assert_eq!(times, vec![0, 60_000, 120_000]);
        assert_eq!(load.warnings.len(), 1);
        assert_eq!(load.candles[2].close.0, 1050);
        assert!(load.gaps.is_empty());
    }

    #[test]
    fn ohlcv_invalid_bar_names_line() {
        let f = file("timestamp_ms,open,high,low,close,volume\n0,10,11,9,10,1\n60000,10,9,11,10,1\n");
        match load_ohlcv_csv(f.path(), &inst(), Timeframe::MINUTE) {
            Err(DataError::InvalidBar { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let g = file("timestamp_ms,open,high,low,close,volume\n0,10,11,9,ten,1\n");
        assert!(matches!(load_ohlcv_csv(g.path(), &inst(), Timeframe::MINUTE), Err(DataError::Parse { line: 2, .. })));
    }

    #[test]
    fn ohlcv_reports_gaps() {
        let f = file("timestamp_ms,open,high,low,close,volume\n0,1,1,1,1,1\n180000,1,1,1,1,1\n");
        let load = load_ohlcv_csv(f.path(), &inst(), Timeframe::MINUTE).unwrap();
        assert_eq!(load.gaps, vec![Gap { after: SimTime(0), missing_bars: 2 }]);
    }

    #[test]
    fn lobster_mapping() {
        let f = file("34200.004,1,11,100,1000000,1\n34200.010,4,11,40,1000000,1\n34200.020,3,11,60,1000000,1\n34200.030,5,0,10,1001000,-1\n34200.040,9,1,1,1,1\n");
        let load = load_order_events(f.path(), EventDialect::Lobster, &inst(), LobsterOptions { midnight_ms: 1_000 }).unwrap();
        assert_eq!(load.events.len(), 3);
        let add = &load.events[0];
        assert_eq!((add.kind, add.side, add.price.0, add.quantity), (BookEventKind::Add, Side::Buy, 10_000, 100));
        assert_eq!(add.event_time, SimTime(1_000 + 34_200_004));
        assert_eq!(load.events[1].kind, BookEventKind::Execute);
        assert_eq!((load.events[2].kind, load.events[2].quantity), (BookEventKind::Cancel, 0));
        assert_eq!(load.skipped["hidden_execution"], 1);
        assert_eq!(load.skipped["unknown_type_9"], 1);
    }

    #[test]
    fn native_events() {
        let f = file("time_ms,kind,order_id,side,price,qty\n0,add,1,sell,99.5,5\n10,cancel,1,sell,99.5,0\n");
        let load = load_order_events(f.path(), EventDialect::Native, &inst(), LobsterOptions::default()).unwrap();
        assert_eq!(load.events.len(), 2);
        assert_eq!(load.events[0].price.0, 9_950);
    }

    #[test]
    fn news_sorted_and_required_time() {
        let f = file("{\"published_at\":200,\"symbols\":[\"NVDA\",\"AMD\"],\"headline\":\"b\"}\n{\"published_at\":100,\"symbols\":[\"NVDA\"],\"headline\":\"a\"}\n");
        let items = load_news_jsonl(f.path()).unwrap();
        assert_eq!(items[0].headline, "a");
        let store = ExternalStore::new(items, Vec::new());
        let q = |s: &str| DataQuery { symbol: s.into(), kind: "news".into(), from: SimTime(0), to: SimTime(500) };
        assert!(matches!(store.query(&q("AMD"), SimTime(500)).unwrap(), ExternalData::News { items, .. } if items.len() == 1));
        let bad = file("{\"symbols\":[\"NVDA\"],\"headline\":\"x\"}\n");
        assert!(matches!(load_news_jsonl(bad.path()), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn store_guards_the_future() {
        let store = ExternalStore::default();
        let q = DataQuery { symbol: "NVDA".into(), kind: "news".into(), from: SimTime(0), to: SimTime(10) };
        assert_eq!(store.query(&q, SimTime(9)), Err(QueryError::FutureWindow { to: 10, now: 9 }));
        let empty = DataQuery { kind: "fundamentals".into(), ..q.clone() };
        assert!(store.query(&empty, SimTime(10)).unwrap().is_empty());
        let unknown = DataQuery { kind: "gossip".into(), ..q };
        assert_eq!(store.query(&unknown, SimTime(10)), Err(QueryError::UnknownKind("gossip".into())));
    }

    #[test]
    fn fundamentals_keep_extras() {
        let f = file("{\"as_of\":5,\"symbol\":\"NVDA\",\"ratios\":{\"pe\":40.5},\"events\":[{\"kind\":\"split\",\"value\":10.0}],\"sector\":\"semis\"}\n");
        let items = load_fundamentals_jsonl(f.path()).unwrap();
        assert_eq!(items[0].extras["sector"], Value::String("semis".into()));
        let store = ExternalStore::new(Vec::new(), items);
        let q = DataQuery { symbol: "NVDA".into(), kind: "events".into(), from: SimTime(0), to: SimTime(5) };
        assert!(matches!(store.query(&q, SimTime(5)).unwrap(), ExternalData::Events { items, .. } if items.len() == 1));
    }

    #[test]
    fn registry_rules() {
        let mut r = AdapterRegistry::with_builtins();
        let dup = r.get("news_jsonl").unwrap().clone();
        assert!(matches!(r.register(dup), Err(DataError::DuplicateProvider(_))));
        let cx = LoadContext { instrument: inst(), timeframe: Timeframe::MINUTE, lobster: LobsterOptions::default() };
        assert!(matches!(r.load("nope", Path::new("x"), &cx), Err(DataError::UnknownProvider(_))));
        let f = file("timestamp_ms,open,high,low,close,volume\n0,1,1,1,1,1\n");
        let via = r.load("ohlcv_csv", f.path(), &cx).unwrap();
        let direct = load_ohlcv_csv(f.path(), &cx.instrument, cx.timeframe).unwrap();
        assert_eq!(via, Dataset::Bars(direct));
    }

    #[test]
    fn ohlcv_round_trip() {
        let f = file("timestamp_ms,open,high,low,close,volume\n0,10.01,11.5,9.99,10.5,100.25\n60000,10,10.2,9.9,10.1,70\n");
        let first = load_ohlcv_csv(f.path(), &inst(), Timeframe::MINUTE).unwrap();
        let mut buf = Vec::new();
        write_ohlcv_csv(&mut buf, &first.candles, &inst()).unwrap();
        let g = file(std::str::from_utf8(&buf).unwrap());
        let second = load_ohlcv_csv(g.path(), &inst(), Timeframe::MINUTE).unwrap();
        assert_eq!(first.candles, second.candles);
    }
}
