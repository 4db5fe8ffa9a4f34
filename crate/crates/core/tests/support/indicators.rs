//! Closed-form and hand-derived indicator values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marketsim::domain::SimTime;
use marketsim::indicators::{atr, ema, rsi, sma, true_range, IndicatorConfig, IndicatorEngine, Ohlc};

use super::{close, Check};

const TOL: f64 = 1e-9;

fn bar(o: f64, h: f64, l: f64, c: f64) -> Ohlc<f64> {
    Ohlc {
        open: o,
        high: h,
        low: l,
        close: c,
        volume: 1.0,
    }
}

fn expect(what: &str, got: f64, want: f64) -> Result<(), String> {
    if close(got, want, TOL) {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

pub fn random_bars(seed: u64, n: usize) -> Vec<Ohlc<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut px = 100.0f64;
    (0..n)
        .map(|_| {
            let open = px;
            px = (px + rng.gen_range(-2.0..2.0)).max(1.0);
            let high = open.max(px) + rng.gen_range(0.0..1.0);
            let low = (open.min(px) - rng.gen_range(0.0..1.0)).max(0.5);
            bar(open, high, low, px)
        })
        .collect()
}

/// Fixed cases whose answers follow from the definitions by hand.
pub fn check_closed_forms() -> Check {
    // Arithmetic series 1..=k: the last n average to k - (n - 1) / 2.
    let xs: Vec<f64> = (1..=50).map(f64::from).collect();
    expect("sma(1..50, 20)", sma(&xs, 20).map_err(|e| e.to_string())?, 50.0 - 19.0 / 2.0)?;
    expect("sma(1..50, 1)", sma(&xs, 1).map_err(|e| e.to_string())?, 50.0)?;

    // Strictly rising closes have no losses.
    expect("rsi rising", rsi(&xs, 14).map_err(|e| e.to_string())?, 100.0)?;
    // n + 1 closes alternating by the same step: equal average gain and loss.
    let alt: Vec<f64> = (0..=14).map(|i| if i % 2 == 0 { 100.0 } else { 101.5 }).collect();
    expect("rsi alternating", rsi(&alt, 14).map_err(|e| e.to_string())?, 50.0)?;
    // Gains 1,2 then loss 1 over n = 3: RS = 3/1, RSI = 75.
    expect("rsi 3", rsi(&[10.0, 11.0, 13.0, 12.0], 3).map_err(|e| e.to_string())?, 75.0)?;

    // Gap up: previous close below the low.
    expect("tr gap up", true_range(&bar(12.0, 13.0, 11.5, 12.5), Some(10.0)), 3.0)?;
    // Gap down: previous close above the high.
    expect("tr gap down", true_range(&bar(8.0, 8.5, 7.0, 7.5), Some(10.0)), 3.0)?;
    expect("tr inside", true_range(&bar(10.0, 12.0, 9.0, 11.0), Some(10.5)), 3.0)?;
    expect("tr first", true_range(&bar(10.0, 12.0, 9.0, 11.0), None), 3.0)?;
    // TRs: first bar H - L = 2, then |13 - 10| = 3, then |7 - 12.5| = 5.5.
    let bars = [bar(9.0, 11.0, 9.0, 10.0), bar(12.0, 13.0, 11.5, 12.5), bar(10.0, 10.0, 7.0, 8.0)];
    expect("atr 3", atr(&bars, 3).map_err(|e| e.to_string())?, 10.5 / 3.0)?;
    expect("atr 2", atr(&bars, 2).map_err(|e| e.to_string())?, 4.25)?;

    // Constant series: every EMA equals the constant.
    let flat = vec![7.25; 30];
    let e = ema(&flat, 10).map_err(|e| e.to_string())?;
    expect("ema flat", *e.last().ok_or("empty ema")?, 7.25)?;
    Ok("SMA, RSI (100 / 50 / 75), TR gap cases, ATR and EMA match hand-derived values".into())
}

/// Wilder RSI computed directly from its recurrences.
fn wilder_rsi(closes: &[f64], n: usize) -> f64 {
    let ch: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    let mut g = ch[..n].iter().map(|c| c.max(0.0)).sum::<f64>() / n as f64;
    let mut l = ch[..n].iter().map(|c| (-c).max(0.0)).sum::<f64>() / n as f64;
    for c in &ch[n..] {
        g = (g * (n - 1) as f64 + c.max(0.0)) / n as f64;
        l = (l * (n - 1) as f64 + (-c).max(0.0)) / n as f64;
    }
    if l == 0.0 {
        100.0
    } else {
        100.0 - 100.0 / (1.0 + g / l)
    }
}

/// The streaming engine against batch functions and direct formulas on a
/// random series, bar by bar.
pub fn check_streaming(points: usize, seed: u64) -> Check {
    let bars = random_bars(seed, points);
    let cfg = IndicatorConfig::default();
    let mut engine = IndicatorEngine::new(cfg.clone(), 0.01).map_err(|e| e.to_string())?;
    let mut compared = 0usize;
    for i in 0..bars.len() {
        let f = engine.update(&bars[i], SimTime(i as u64), SimTime(i as u64 + 1), None);
        let closes: Vec<f64> = bars[..=i].iter().map(|b| b.close).collect();
        let at = |what: &str| format!("{what} at bar {i}");
        if i + 1 >= cfg.sma_n {
            let direct = closes[i + 1 - cfg.sma_n..].iter().sum::<f64>() / cfg.sma_n as f64;
            expect(&at("sma"), f.sma.ok_or(at("sma missing"))?, direct)?;
            expect(&at("sma batch"), f.sma.unwrap(), sma(&closes, cfg.sma_n).map_err(|e| e.to_string())?)?;
            let batch = ema(&closes, cfg.ema_n).map_err(|e| e.to_string())?;
            expect(&at("ema"), f.ema.ok_or(at("ema missing"))?, *batch.last().unwrap())?;
            compared += 3;
        } else if f.sma.is_some() {
            return Err(at("sma before warm-up"));
        }
        if i >= cfg.rsi_n {
            let r = f.rsi.ok_or(at("rsi missing"))?;
            expect(&at("rsi"), r, wilder_rsi(&closes, cfg.rsi_n))?;
            expect(&at("rsi batch"), r, rsi(&closes, cfg.rsi_n).map_err(|e| e.to_string())?)?;
            compared += 2;
        }
        let prev = i.checked_sub(1).map(|p| bars[p].close);
        let b = &bars[i];
        let tr = match prev {
            Some(p) => (b.high - b.low).max((b.high - p).abs()).max((b.low - p).abs()),
            None => b.high - b.low,
        };
        expect(&at("tr"), f.tr.ok_or(at("tr missing"))?, tr)?;
        if i + 1 >= cfg.atr_n {
            expect(&at("atr"), f.atr.ok_or(at("atr missing"))?, atr(&bars[..=i], cfg.atr_n).map_err(|e| e.to_string())?)?;
            compared += 1;
        }
        compared += 1;
    }
    Ok(format!("{points} bars, {compared} streaming values equal batch and direct formulas at 1e-9"))
}
