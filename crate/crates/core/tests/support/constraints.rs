//! Random provider requests pushed through the account rules, with random
//! fills, partial fills, cancels and price moves in between.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marketsim::agents::{parse_actions, Account, ActionKind};
use marketsim::domain::{OrderId, OrderKind, OrderType, Price};

use super::Check;

fn request_json(rng: &mut ChaCha8Rng, px: i64) -> String {
    let action = ["BUY", "SELL", "SHORT", "SHORT_COVER"][rng.gen_range(0..4)];
    let order_type = ["MARKET", "LIMIT", "STOP"][rng.gen_range(0..3)];
    let price = if order_type == "MARKET" {
        "null".to_string()
    } else {
        format!("{:.2}", rng.gen_range(px / 2..=px * 2) as f64)
    };
    format!(
        r#"[{{"action":"{action}","orderType":"{order_type}","price":{price},"quantity":{},"explanation":"fuzz"}}]"#,
        if rng.gen_bool(0.8) { rng.gen_range(1..=60) } else { rng.gen_range(1..=2_000) }
    )
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub requests: usize,
    pub accepted: usize,
    pub fills: usize,
    pub violations: Vec<String>,
}

pub fn fuzz(requests: usize, seed: u64) -> FuzzStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats::default();
    let mut account = Account::new(1_000_000.0);
    let mut px: i64 = 1_000;
    let mut next = 1u64;
    let mut live: Vec<OrderId> = Vec::new();
    for _ in 0..requests {
        px = (px + rng.gen_range(-40..=40)).clamp(10, 5_000);
        let text = request_json(&mut rng, px);
        let req = match parse_actions(&text) {
            Ok(mut v) => v.remove(0),
            Err(e) => {
                stats.violations.push(format!("generator wrote bad json {text}: {e}"));
                continue;
            }
        };
        stats.requests += 1;
        let kind = match (req.order_type, req.price) {
            (OrderType::Market, _) => OrderKind::Market,
            (OrderType::Limit, Some(p)) => OrderKind::Limit(Price(p as i64)),
            (OrderType::Stop, Some(p)) => OrderKind::Stop(Price(p as i64)),
            _ => continue,
        };
        let id = OrderId(next);
        next += 1;
        if account.place(id, req.action, kind, req.quantity, Some(Price(px))).is_ok() {
            stats.accepted += 1;
            live.push(id);
        }

        // Random executions on live orders at prices near the mark, the way
        // the engine caps them by the current allowance.
        for _ in 0..rng.gen_range(0..3) {
            if live.is_empty() {
                break;
            }
            let k = rng.gen_range(0..live.len());
            let oid = live[k];
            let Some(o) = account.outstanding(oid).copied() else {
                live.swap_remove(k);
                continue;
            };
            let fill_px = Price((px + rng.gen_range(-80..=80)).max(1));
            let want = rng.gen_range(1..=o.remaining);
            let qty = want.min(account.fill_allowance(oid, fill_px));
            let before = account.portfolio;
            if qty > 0 {
                account.on_fill(oid, qty, fill_px);
                stats.fills += 1;
            }
            let after = account.portfolio;
            match o.action {
                ActionKind::Sell if qty > before.long_qty => {
                    stats.violations.push(format!("sold {qty} with {} long", before.long_qty))
                }
                ActionKind::ShortCover if qty > before.short_qty => {
                    stats.violations.push(format!("covered {qty} with {} short", before.short_qty))
                }
                _ => {}
            }
            if after.cash < 0.0 {
                stats.violations.push(format!("cash {} after {:?} fill of {qty} at {}", after.cash, o.action, fill_px.0));
            }
            if o.action == ActionKind::Sell && after.short_qty > before.short_qty {
                stats.violations.push("SELL opened a short".into());
            }
            if o.action == ActionKind::ShortCover && after.long_qty > before.long_qty {
                stats.violations.push("SHORT_COVER opened a long".into());
            }
            if qty == 0 || account.outstanding(oid).is_none() || rng.gen_bool(0.1) {
                account.release(oid);
                live.retain(|x| *x != oid);
            }
            for stale in account.stale_exits() {
                account.release(stale);
                live.retain(|x| *x != stale);
            }
        }
        if rng.gen_bool(0.05) {
            for oid in live.drain(..) {
                account.release(oid);
            }
        }
        let c = account.commitments();
        if c.reserved_cash > account.portfolio.cash + 1e-6 {
            stats.violations.push(format!("reserved {} above cash {}", c.reserved_cash, account.portfolio.cash));
        }
        if stats.violations.len() > 10 {
            break;
        }
    }
    stats
}

pub fn check_fuzz(requests: usize, seed: u64) -> Check {
    let s = fuzz(requests, seed);
    if let Some(v) = s.violations.first() {
        return Err(format!("{} violations, first: {v}", s.violations.len()));
    }
    Ok(format!(
        "{} requests, {} accepted, {} fills: no negative cash, oversell or over-cover",
        s.requests, s.accepted, s.fills
    ))
}
