//! Brute-force limit order book: linear scans over a flat list, no price
//! levels, no index. Slow on purpose so it shares nothing with the engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marketsim::domain::{AgentId, OrderId, OrderKind, Price, PricedOrder, Side, SimTime};
use marketsim::matching::{BookUpdate, MatchingEngine};

use super::Check;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Market,
    Limit(i64),
    Stop(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Submit {
        id: u64,
        agent: &'static str,
        side: Side,
        kind: Kind,
        qty: u64,
        at: u64,
    },
    Cancel {
        id: u64,
    },
}

/// What one input produced, in a form both books can report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Out {
    Trade {
        taker: u64,
        maker: u64,
        price: i64,
        qty: u64,
        at: u64,
    },
    Unfilled {
        id: u64,
        qty: u64,
    },
    Canceled {
        id: u64,
        remaining: u64,
    },
}

#[derive(Debug, Clone)]
struct Rest {
    id: u64,
    side: Side,
    price: i64,
    qty: u64,
    seq: u64,
}

#[derive(Debug, Clone)]
struct Parked {
    id: u64,
    side: Side,
    stop: i64,
    qty: u64,
    at: u64,
    seq: u64,
}

#[derive(Debug, Default)]
pub struct BruteBook {
    resting: Vec<Rest>,
    stops: Vec<Parked>,
    last: Option<i64>,
    seq: u64,
    stop_seq: u64,
}

fn fires(side: Side, stop: i64, print: i64) -> bool {
    match side {
        Side::Buy => print >= stop,
        Side::Sell => print <= stop,
    }
}

impl BruteBook {
    pub fn best(&self, side: Side) -> Option<i64> {
        let prices = self.resting.iter().filter(|r| r.side == side).map(|r| r.price);
        match side {
            Side::Buy => prices.max(),
            Side::Sell => prices.min(),
        }
    }

    /// Index of the resting order a taker on `side` would hit next.
    fn next_maker(&self, side: Side, limit: Option<i64>) -> Option<usize> {
        let mut pick: Option<usize> = None;
        for (i, r) in self.resting.iter().enumerate() {
            if r.side == side {
                continue;
            }
            let ok = match (side, limit) {
                (_, None) => true,
                (Side::Buy, Some(l)) => r.price <= l,
                (Side::Sell, Some(l)) => r.price >= l,
            };
            if !ok {
                continue;
            }
            pick = match pick {
                None => Some(i),
                Some(j) => {
                    let b = &self.resting[j];
                    let better = match side {
                        Side::Buy => r.price < b.price,
                        Side::Sell => r.price > b.price,
                    };
                    if better || (r.price == b.price && r.seq < b.seq) {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
            };
        }
        pick
    }

    fn take(&mut self, id: u64, side: Side, limit: Option<i64>, mut qty: u64, at: u64, out: &mut Vec<Out>) -> Vec<i64> {
        let mut prints = Vec::new();
        while qty > 0 {
            let Some(i) = self.next_maker(side, limit) else { break };
            let q = qty.min(self.resting[i].qty);
            let price = self.resting[i].price;
            out.push(Out::Trade {
                taker: id,
                maker: self.resting[i].id,
                price,
                qty: q,
                at,
            });
            prints.push(price);
            self.last = Some(price);
            qty -= q;
            self.resting[i].qty -= q;
            if self.resting[i].qty == 0 {
                self.resting.remove(i);
            }
        }
        if qty > 0 {
            match limit {
                Some(price) => {
                    self.resting.push(Rest {
                        id,
                        side,
                        price,
                        qty,
                        seq: self.seq,
                    });
                    self.seq += 1;
                }
                None => out.push(Out::Unfilled { id, qty }),
            }
        }
        prints
    }

    fn fired_by(&mut self, print: i64) -> Vec<Parked> {
        let mut fired: Vec<Parked> = Vec::new();
        let mut i = 0;
        while i < self.stops.len() {
            if fires(self.stops[i].side, self.stops[i].stop, print) {
                fired.push(self.stops.remove(i));
            } else {
                i += 1;
            }
        }
        // Sells before buys; nearest trigger first; then arrival, then entry order.
        fired.sort_by_key(|s| {
            let rank = if s.side == Side::Sell { 0 } else { 1 };
            let near = if s.side == Side::Sell { -s.stop } else { s.stop };
            (rank, near, s.at, s.seq)
        });
        fired
    }

    pub fn apply(&mut self, op: &Op) -> Vec<Out> {
        let mut out = Vec::new();
        match *op {
            Op::Cancel { id } => {
                if let Some(i) = self.resting.iter().position(|r| r.id == id) {
                    let r = self.resting.remove(i);
                    out.push(Out::Canceled { id, remaining: r.qty });
                } else if let Some(i) = self.stops.iter().position(|s| s.id == id) {
                    let s = self.stops.remove(i);
                    out.push(Out::Canceled { id, remaining: s.qty });
                }
            }
            Op::Submit {
                id,
                side,
                kind,
                qty,
                at,
                ..
            } => {
                let mut queue: Vec<Parked> = Vec::new();
                match kind {
                    Kind::Market | Kind::Limit(_) => {
                        let limit = if let Kind::Limit(p) = kind { Some(p) } else { None };
                        for p in self.take(id, side, limit, qty, at, &mut out) {
                            let fired = self.fired_by(p);
                            queue.extend(fired);
                        }
                    }
                    Kind::Stop(stop) => {
                        let s = Parked {
                            id,
                            side,
                            stop,
                            qty,
                            at,
                            seq: self.stop_seq,
                        };
                        self.stop_seq += 1;
                        match self.last {
                            Some(l) if fires(side, stop, l) => queue.push(s),
                            _ => self.stops.push(s),
                        }
                    }
                }
                let mut k = 0;
                while k < queue.len() {
                    let s = queue[k].clone();
                    k += 1;
                    for p in self.take(s.id, s.side, None, s.qty, at, &mut out) {
                        let fired = self.fired_by(p);
                        queue.extend(fired);
                    }
                }
            }
        }
        out
    }
}

fn engine_apply(engine: &mut MatchingEngine, op: &Op) -> Vec<Out> {
    match *op {
        Op::Cancel { id } => engine
            .cancel(OrderId(id))
            .map(|c| vec![Out::Canceled { id, remaining: c.remaining }])
            .unwrap_or_default(),
        Op::Submit {
            id,
            agent,
            side,
            kind,
            qty,
            at,
        } => {
            let order = PricedOrder {
                order_id: OrderId(id),
                agent_id: AgentId::new(agent),
                side,
                kind: match kind {
                    Kind::Market => OrderKind::Market,
                    Kind::Limit(p) => OrderKind::Limit(Price(p)),
                    Kind::Stop(p) => OrderKind::Stop(Price(p)),
                },
                quantity: qty,
                submit_time: SimTime(at),
            };
            engine
                .submit(&order, SimTime(at), None)
                .into_iter()
                .filter_map(|u| match u {
                    BookUpdate::Trade(t) => Some(Out::Trade {
                        taker: t.taker_order.0,
                        maker: t.maker_order.0,
                        price: t.price.0,
                        qty: t.quantity,
                        at: t.exec_time.0,
                    }),
                    BookUpdate::Unfilled { order_id, quantity, .. } => Some(Out::Unfilled {
                        id: order_id.0,
                        qty: quantity,
                    }),
                    _ => None,
                })
                .collect()
        }
    }
}

pub fn random_stream(rng: &mut ChaCha8Rng, max_ops: usize) -> Vec<Op> {
    let n = rng.gen_range(1..=max_ops);
    let mut ops = Vec::with_capacity(n);
    let mut at = 0u64;
    let mut next_id = 1u64;
    let agents = ["a", "b", "c"];
    for _ in 0..n {
        at += rng.gen_range(0..3);
        if next_id > 1 && rng.gen_bool(0.2) {
            // Mostly known ids, sometimes a stranger.
            let id = if rng.gen_bool(0.9) { rng.gen_range(1..next_id) } else { 10_000 };
            ops.push(Op::Cancel { id });
            continue;
        }
        let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
        let price = rng.gen_range(95..=105);
        let kind = match rng.gen_range(0..10) {
            0..=4 => Kind::Limit(price),
            5..=7 => Kind::Market,
            _ => Kind::Stop(price),
        };
        ops.push(Op::Submit {
            id: next_id,
            agent: agents[rng.gen_range(0..agents.len())],
            side,
            kind,
            qty: rng.gen_range(1..=10),
            at,
        });
        next_id += 1;
    }
    ops
}

/// Runs `streams` random streams through both books and compares every output.
pub fn check_oracle(streams: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fills = 0usize;
    let mut ops_total = 0usize;
    for s in 0..streams {
        let ops = random_stream(&mut rng, 50);
        let mut engine = MatchingEngine::new();
        let mut brute = BruteBook::default();
        for (i, op) in ops.iter().enumerate() {
            let got = engine_apply(&mut engine, op);
            let want = brute.apply(op);
            if got != want {
                return Err(format!("stream {s} op {i} {op:?}: engine {got:?} oracle {want:?}"));
            }
            fills += got.iter().filter(|o| matches!(o, Out::Trade { .. })).count();
            if engine.book().is_crossed() {
                return Err(format!("stream {s} op {i}: crossed book"));
            }
            let tops = (engine.book().best_bid().map(|p| p.0), engine.book().best_ask().map(|p| p.0));
            if tops != (brute.best(Side::Buy), brute.best(Side::Sell)) {
                return Err(format!("stream {s} op {i}: top of book {tops:?} differs from oracle"));
            }
        }
        ops_total += ops.len();
    }
    Ok(format!("{streams} streams, {ops_total} inputs, {fills} trades, 0 mismatches, 0 crossed states"))
}
