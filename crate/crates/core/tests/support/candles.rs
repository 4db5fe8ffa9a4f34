//! Waypoint-walk oracle: steps along O, X, Y, C one tick at a time and stops at
//! the first tick that satisfies the order. Shares no code with the resolver.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marketsim::candles::resolve_bar;
use marketsim::domain::{AgentId, Candle, OrderId, OrderKind, Price, PricedOrder, Side, SimTime, Timeframe};

use super::Check;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expected {
    pub price: i64,
    pub exec_time: u64,
    /// Segment index and exact distance into it as `num / den`.
    seg: i64,
    num: i64,
    den: i64,
}

impl Expected {
    fn position_cmp(&self, other: &Expected) -> Ordering {
        let a = (self.seg * self.den + self.num) as i128 * other.den as i128;
        let b = (other.seg * other.den + other.num) as i128 * self.den as i128;
        a.cmp(&b)
    }
}

fn corners(c: &Candle) -> [i64; 4] {
    if c.close >= c.open {
        [c.open.0, c.low.0, c.high.0, c.close.0]
    } else {
        [c.open.0, c.high.0, c.low.0, c.close.0]
    }
}

fn wants(order: &PricedOrder, p: i64) -> bool {
    match (order.kind, order.side) {
        (OrderKind::Market, _) => true,
        (OrderKind::Limit(l), Side::Buy) | (OrderKind::Stop(l), Side::Sell) => p <= l.0,
        (OrderKind::Limit(l), Side::Sell) | (OrderKind::Stop(l), Side::Buy) => p >= l.0,
    }
}

pub fn walk(order: &PricedOrder, c: &Candle) -> Option<Expected> {
    let pts = corners(c);
    let span = c.timeframe.0 as i128;
    let at = |seg: i64, num: i64, den: i64| {
        let t = ((seg as i128 * den as i128 + num as i128) * span / (3 * den as i128)) as u64;
        c.bar_start.0 + t.min(c.timeframe.0 - 1)
    };
    if wants(order, pts[0]) {
        return Some(Expected {
            price: pts[0],
            exec_time: at(0, 0, 1),
            seg: 0,
            num: 0,
            den: 1,
        });
    }
    for seg in 0..3 {
        let (from, to) = (pts[seg], pts[seg + 1]);
        let step = (to - from).signum();
        let mut p = from;
        let mut k = 0;
        while p != to {
            p += step;
            k += 1;
            if wants(order, p) {
                let den = (to - from).abs();
                return Some(Expected {
                    price: p,
                    exec_time: at(seg as i64, k, den),
                    seg: seg as i64,
                    num: k,
                    den,
                });
            }
        }
    }
    None
}

pub fn random_bar(rng: &mut ChaCha8Rng) -> Candle {
    let open = rng.gen_range(900..=1100);
    let close = rng.gen_range(900..=1100);
    let high = open.max(close) + rng.gen_range(0..=40);
    let low = open.min(close) - rng.gen_range(0..=40);
    let tf = [60_000u64, 300_000, 86_400_000, 7][rng.gen_range(0..4)];
    Candle::new("X", Price(open), Price(high), Price(low), Price(close), 1.0, SimTime(rng.gen_range(0..1_000_000)), Timeframe(tf))
        .expect("valid bar")
}

pub fn random_order(rng: &mut ChaCha8Rng, id: u64, bar: &Candle) -> PricedOrder {
    let level = Price(rng.gen_range(bar.low.0 - 60..=bar.high.0 + 60));
    PricedOrder {
        order_id: OrderId(id),
        agent_id: AgentId::new("a"),
        side: if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell },
        kind: match rng.gen_range(0..5) {
            0 => OrderKind::Market,
            1 | 2 => OrderKind::Limit(level),
            _ => OrderKind::Stop(level),
        },
        quantity: rng.gen_range(1..=100),
        submit_time: SimTime(0),
    }
}

/// Invariants that hold for any single fill, independent of the oracle.
fn invariant_violation(order: &PricedOrder, bar: &Candle, filled: Option<i64>) -> Option<String> {
    let (lo, hi, open) = (bar.low.0, bar.high.0, bar.open.0);
    if let Some(p) = filled {
        if p < lo || p > hi {
            return Some(format!("fill {p} outside [{lo}, {hi}]"));
        }
        match (order.kind, order.side) {
            (OrderKind::Limit(l), Side::Buy) if p > l.0 => return Some(format!("buy limit {} filled at {p}", l.0)),
            (OrderKind::Limit(l), Side::Sell) if p < l.0 => return Some(format!("sell limit {} filled at {p}", l.0)),
            _ => {}
        }
    }
    let level = order.kind.price().map(|p| p.0);
    if let Some(l) = level {
        let gapped = wants(order, open);
        let outside = l < lo || l > hi;
        if outside && !gapped && filled.is_some() {
            return Some(format!("level {l} outside [{lo}, {hi}] filled without a gap"));
        }
    }
    None
}

/// Random bars with one to four orders each until `pairs` (order, bar) pairs
/// have been checked.
pub fn check_bars(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seen, mut filled) = (0usize, 0usize);
    while seen < pairs {
        let bar = random_bar(&mut rng);
        let n = rng.gen_range(1..=4);
        let orders: Vec<PricedOrder> = (0..n).map(|i| random_order(&mut rng, i as u64 + 1, &bar)).collect();
        let res = resolve_bar(&orders, &bar);

        let mut want: Vec<(usize, Expected)> = orders
            .iter()
            .enumerate()
            .filter_map(|(i, o)| walk(o, &bar).map(|e| (i, e)))
            .collect();
        want.sort_by(|(ia, a), (ib, b)| a.position_cmp(b).then(ia.cmp(ib)));

        let got: Vec<(u64, i64, u64, u64)> =
            res.fills.iter().map(|f| (f.order_id.0, f.price.0, f.exec_time.0, f.quantity)).collect();
        let exp: Vec<(u64, i64, u64, u64)> = want
            .iter()
            .map(|(i, e)| (orders[*i].order_id.0, e.price, e.exec_time, orders[*i].quantity))
            .collect();
        if got != exp {
            return Err(format!("bar {bar:?} orders {orders:?}: resolver {got:?} oracle {exp:?}"));
        }
        let survivors: Vec<u64> = res.surviving.iter().map(|o| o.order_id.0).collect();
        let unfilled: Vec<u64> = orders.iter().filter(|o| walk(o, &bar).is_none()).map(|o| o.order_id.0).collect();
        if survivors != unfilled {
            return Err(format!("bar {bar:?}: survivors {survivors:?}, oracle {unfilled:?}"));
        }
        for o in &orders {
            let p = res.fills.iter().find(|f| f.order_id == o.order_id).map(|f| f.price.0);
            if let Some(v) = invariant_violation(o, &bar, p) {
                return Err(format!("bar {bar:?} order {o:?}: {v}"));
            }
        }
        seen += orders.len();
        filled += res.fills.len();
    }
    Ok(format!("{seen} pairs, {filled} fills, 0 invariant violations, 0 oracle mismatches"))
}
