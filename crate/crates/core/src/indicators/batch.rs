//! Indicator definitions evaluated from scratch over a full series.
//!
//! These are the reference forms; [`super::IndicatorEngine`] maintains the same
//! quantities incrementally.

use crate::matching::Ladder;
use crate::scalar::Real;

use super::{Bands, IndicatorError, Macd, Ohlc};

fn warmup<T>(needed: usize, available: usize) -> Result<T, IndicatorError> {
    Err(IndicatorError::Warmup { needed, available })
}

fn mean<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + *v) / T::from_qty(values.len() as u64)
}

/// Arithmetic mean of the last `n` closes.
pub fn sma<T: Real>(closes: &[T], n: usize) -> Result<T, IndicatorError> {
    if n == 0 || closes.len() < n {
        return warmup(n, closes.len());
    }
    Ok(mean(&closes[closes.len() - n..]))
}

/// EMA with `alpha = 2 / (n + 1)`, seeded by the SMA of the first `n` closes.
///
/// Element `i` of the result is the EMA at close `i + n - 1`.
pub fn ema<T: Real>(closes: &[T], n: usize) -> Result<Vec<T>, IndicatorError> {
    if n == 0 || closes.len() < n {
        return warmup(n, closes.len());
    }
    let alpha = T::from_qty(2) / T::from_qty(n as u64 + 1);
    let mut value = mean(&closes[..n]);
    let mut out = Vec::with_capacity(closes.len() - n + 1);
    out.push(value);
    for &price in &closes[n..] {
        value = alpha * price + (T::one() - alpha) * value;
        out.push(value);
    }
    Ok(out)
}

/// Wilder-smoothed average gain and loss after the last close.
fn wilder_averages<T: Real>(closes: &[T], n: usize) -> Result<(T, T), IndicatorError> {
    if n == 0 || closes.len() < n + 1 {
        return warmup(n + 1, closes.len());
    }
    let change = |i: usize| closes[i + 1] - closes[i];
    let split = |d: T| {
        if d > T::zero() {
            (d, T::zero())
        } else {
            (T::zero(), -d)
        }
    };
    let nn = T::from_qty(n as u64);
    let (mut gain, mut loss) = (0..n).fold((T::zero(), T::zero()), |(g, l), i| {
        let (up, down) = split(change(i));
        (g + up, l + down)
    });
    gain = gain / nn;
    loss = loss / nn;
    for i in n..closes.len() - 1 {
        let (up, down) = split(change(i));
        gain = (gain * (nn - T::one()) + up) / nn;
        loss = (loss * (nn - T::one()) + down) / nn;
    }
    Ok((gain, loss))
}

pub(crate) fn rsi_from_averages<T: Real>(gain: T, loss: T) -> T {
    let hundred = T::from_qty(100);
    if loss == T::zero() {
        return hundred;
    }
    if gain == T::zero() {
        return T::zero();
    }
    let rs = gain / loss;
    hundred - hundred / (T::one() + rs)
}

/// `100 - 100 / (1 + RS)` with `RS` = Wilder average gain / average loss.
pub fn rsi<T: Real>(closes: &[T], n: usize) -> Result<T, IndicatorError> {
    let (gain, loss) = wilder_averages(closes, n)?;
    Ok(rsi_from_averages(gain, loss))
}

/// `max(H - L, |H - prev_close|, |L - prev_close|)`; just `H - L` without a previous close.
pub fn true_range<T: Real>(bar: &Ohlc<T>, prev_close: Option<T>) -> T {
    let range = bar.high - bar.low;
    match prev_close {
        None => range,
        Some(prev) => range
            .max((bar.high - prev).abs())
            .max((bar.low - prev).abs()),
    }
}

/// True range of every bar; the first bar has no previous close.
pub fn true_ranges<T: Real>(bars: &[Ohlc<T>]) -> Vec<T> {
    bars.iter()
        .enumerate()
        .map(|(i, bar)| true_range(bar, i.checked_sub(1).map(|p| bars[p].close)))
        .collect()
}

/// Arithmetic mean of the last `n` true ranges.
pub fn atr<T: Real>(bars: &[Ohlc<T>], n: usize) -> Result<T, IndicatorError> {
    if n == 0 || bars.len() < n {
        return warmup(n, bars.len());
    }
    let start = bars.len() - n;
    let trs: Vec<T> = (start..bars.len())
        .map(|i| true_range(&bars[i], i.checked_sub(1).map(|p| bars[p].close)))
        .collect();
    Ok(mean(&trs))
}

/// MACD line, its signal EMA and the histogram at the last close.
pub fn macd<T: Real>(
    closes: &[T],
    fast: usize,
    slow: usize,
    signal: usize,
) -> Result<Macd<T>, IndicatorError> {
    if fast >= slow {
        return Err(IndicatorError::BadConfig(format!(
            "macd fast ({fast}) must be below slow ({slow})"
        )));
    }
    let needed = slow + signal - 1;
    if signal == 0 || closes.len() < needed {
        return warmup(needed, closes.len());
    }
    let fast_ema = ema(closes, fast)?;
    let slow_ema = ema(closes, slow)?;
    let offset = slow - fast;
    let line: Vec<T> = slow_ema
        .iter()
        .enumerate()
        .map(|(i, s)| fast_ema[i + offset] - *s)
        .collect();
    let signal_line = *ema(&line, signal)?.last().expect("non-empty");
    let last = *line.last().expect("non-empty");
    Ok(Macd {
        line: last,
        signal: signal_line,
        histogram: last - signal_line,
    })
}

/// Population standard deviation about the mean.
pub fn population_std<T: Real>(values: &[T]) -> T {
    let m = mean(values);
    let var = values
        .iter()
        .fold(T::zero(), |acc, v| acc + (*v - m) * (*v - m))
        / T::from_qty(values.len() as u64);
    var.sqrt()
}

/// SMA of the last `n` closes with bands at `k` population standard deviations.
pub fn bollinger<T: Real>(closes: &[T], n: usize, k: T) -> Result<Bands<T>, IndicatorError> {
    if n == 0 || closes.len() < n {
        return warmup(n, closes.len());
    }
    let window = &closes[closes.len() - n..];
    let mid = mean(window);
    let width = k * population_std(window);
    Ok(Bands {
        mid,
        upper: mid + width,
        lower: mid - width,
    })
}

/// Volume-weighted average of `(price, volume)` pairs.
pub fn vwap<T: Real>(trades: &[(T, T)]) -> Result<T, IndicatorError> {
    let (pv, v) = trades
        .iter()
        .fold((T::zero(), T::zero()), |(pv, v), (p, q)| (pv + *p * *q, v + *q));
    if v <= T::zero() {
        return Err(IndicatorError::NoVolume);
    }
    Ok(pv / v)
}

/// Bar VWAP using the typical price `(H + L + C) / 3`.
pub fn vwap_bars<T: Real>(bars: &[Ohlc<T>]) -> Result<T, IndicatorError> {
    let pairs: Vec<(T, T)> = bars.iter().map(|b| (b.typical_price(), b.volume)).collect();
    vwap(&pairs)
}

/// `(Qbid - Qask) / (Qbid + Qask)`; zero when both are empty.
pub fn imbalance<T: Real>(bid_qty: T, ask_qty: T) -> T {
    let total = bid_qty + ask_qty;
    if total == T::zero() {
        T::zero()
    } else {
        (bid_qty - ask_qty) / total
    }
}

/// Imbalance over the levels present in `ladder`.
pub fn order_book_imbalance<T: Real>(ladder: &Ladder) -> T {
    imbalance(T::from_qty(ladder.bid_qty()), T::from_qty(ladder.ask_qty()))
}

/// Inserts `level` as the most recent, dropping older levels within one tick.
pub(crate) fn push_level<T: Real>(levels: &mut Vec<T>, level: T, tick: T) {
    let slack = tick * T::lit(1.000_001);
    levels.retain(|l| (*l - level).abs() > slack);
    levels.insert(0, level);
}

/// Whether index `center` is a strict extremum over `values[center - w ..= center + w]`.
pub(crate) fn is_strict_extremum<T: Real>(
    values: &[T],
    center: usize,
    w: usize,
    better: impl Fn(T, T) -> bool,
) -> bool {
    (center - w..=center + w)
        .filter(|&j| j != center)
        .all(|j| better(values[center], values[j]))
}

/// Swing lows (supports) and swing highs (resistances), most recent first,
/// de-duplicated within one tick.
pub fn support_resistance<T: Real>(
    bars: &[Ohlc<T>],
    w: usize,
    tick: T,
) -> Result<(Vec<T>, Vec<T>), IndicatorError> {
    let needed = 2 * w + 1;
    if w == 0 || bars.len() < needed {
        return warmup(needed, bars.len());
    }
    let lows: Vec<T> = bars.iter().map(|b| b.low).collect();
    let highs: Vec<T> = bars.iter().map(|b| b.high).collect();
    let mut supports = Vec::new();
    let mut resistances = Vec::new();
    for center in w..bars.len() - w {
        if is_strict_extremum(&lows, center, w, |c, o| c < o) {
            push_level(&mut supports, lows[center], tick);
        }
        if is_strict_extremum(&highs, center, w, |c, o| c > o) {
            push_level(&mut resistances, highs[center], tick);
        }
    }
    Ok((supports, resistances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bar(h: f64, l: f64, c: f64) -> Ohlc<f64> {
        Ohlc {
            open: c,
            high: h,
            low: l,
            close: c,
            volume: 1.0,
        }
    }

    #[test]
    fn sma_examples() {
        assert_eq!(sma(&[1.0, 2.0, 3.0, 4.0, 5.0], 5).unwrap(), 3.0);
        assert_eq!(sma(&[7.25; 9], 4).unwrap(), 7.25);
        assert_eq!(sma(&[10.0, 12.0, 9.0, 11.0], 4).unwrap(), 10.5);
        assert_eq!(
            sma(&[1.0, 2.0], 3),
            Err(IndicatorError::Warmup { needed: 3, available: 2 })
        );
    }

    #[test]
    fn ema_examples() {
        assert!(ema(&[4.0; 10], 3).unwrap().iter().all(|v| *v == 4.0));
        let series = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(ema(&series, 1).unwrap(), series.to_vec());
        // alpha = 1/2 on a unit ramp seeded at the SMA lags the price by exactly 1.
        let ramp: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(
            ema(&ramp, 3).unwrap(),
            vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );
    }

    #[test]
    fn rsi_examples() {
        let rising: Vec<f64> = (0..20).map(f64::from).collect();
        assert_eq!(rsi(&rising, 14).unwrap(), 100.0);
        let falling: Vec<f64> = (0..20).rev().map(f64::from).collect();
        assert_eq!(rsi(&falling, 14).unwrap(), 0.0);
        let alternating: Vec<f64> = (0..15).map(|i| if i % 2 == 0 { 10.0 } else { 11.0 }).collect();
        assert_relative_eq!(rsi(&alternating, 14).unwrap(), 50.0, max_relative = 1e-12);
        assert!(rsi(&rising[..14], 14).is_err());
    }

    #[test]
    fn true_range_examples() {
        assert_eq!(true_range(&bar(12.0, 9.0, 10.0), Some(11.0)), 3.0);
        assert_eq!(true_range(&bar(12.0, 11.0, 11.5), Some(8.0)), 4.0);
        assert_eq!(true_range(&bar(5.0, 5.0, 5.0), Some(5.0)), 0.0);
        assert_eq!(true_range(&bar(12.0, 9.0, 10.0), None), 3.0);
    }

    #[test]
    fn atr_examples() {
        let flat = [bar(2.0, 0.0, 1.0), bar(2.0, 0.0, 1.0), bar(2.0, 0.0, 1.0)];
        assert_eq!(atr(&flat, 3).unwrap(), 2.0);
        // TRs of 3, 4, 0 in sequence.
        let bars = [bar(12.0, 9.0, 8.0), bar(12.0, 11.0, 11.0), bar(11.0, 11.0, 11.0)];
        assert_eq!(true_ranges(&bars), vec![3.0, 4.0, 0.0]);
        assert_relative_eq!(atr(&bars, 3).unwrap(), 7.0 / 3.0, max_relative = 1e-12);
        assert_eq!(atr(&bars, 1).unwrap(), 0.0);
    }

    #[test]
    fn macd_examples() {
        let flat = [50.0; 40];
        let m = macd(&flat, 12, 26, 9).unwrap();
        assert_eq!((m.line, m.histogram), (0.0, 0.0));
        let ramp: Vec<f64> = (0..60).map(f64::from).collect();
        assert!(macd(&ramp, 12, 26, 9).unwrap().line > 0.0);
        assert!(macd(&ramp[..33], 12, 26, 9).is_err());
        assert!(macd(&ramp[..34], 12, 26, 9).is_ok());
        assert!(matches!(macd(&ramp, 26, 12, 9), Err(IndicatorError::BadConfig(_))));
    }

    #[test]
    fn bollinger_examples() {
        let b = bollinger(&[9.0, 11.0], 2, 2.0).unwrap();
        assert_eq!((b.mid, b.upper, b.lower), (10.0, 12.0, 8.0));
        let flat = bollinger(&[3.0; 5], 5, 2.0).unwrap();
        assert_eq!((flat.upper, flat.lower), (3.0, 3.0));
    }

    #[test]
    fn vwap_examples() {
        assert_eq!(vwap(&[(10.0, 5.0)]).unwrap(), 10.0);
        assert_eq!(vwap(&[(10.0, 1.0), (20.0, 3.0)]).unwrap(), 17.5);
        assert_eq!(vwap(&[(10.0, 0.0)]), Err(IndicatorError::NoVolume));
        let b = Ohlc { open: 1.0, high: 12.0, low: 6.0, close: 9.0, volume: 2.0 };
        assert_eq!(vwap_bars(&[b]).unwrap(), 9.0);
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance(4.0, 4.0), 0.0);
        assert_eq!(imbalance(10.0, 0.0), 1.0);
        assert_eq!(imbalance(6.0, 2.0), 0.5);
        assert_eq!(imbalance(0.0, 0.0), 0.0);
    }

    #[test]
    fn support_resistance_examples() {
        let v: Vec<_> = [5.0, 4.0, 3.0, 4.0, 5.0].iter().map(|&l| bar(l + 1.0, l, l)).collect();
        let (s, r) = support_resistance(&v, 2, 0.01).unwrap();
        assert_eq!(s, vec![3.0]);
        assert!(r.is_empty());

        let mono: Vec<_> = (0..10).map(|i| bar(i as f64 + 1.0, i as f64, i as f64)).collect();
        let (s, r) = support_resistance(&mono, 2, 0.01).unwrap();
        assert!(s.is_empty() && r.is_empty());

        let lows = [5.0, 4.0, 3.0, 4.0, 5.0, 4.0, 3.01, 4.0, 5.0];
        let two: Vec<_> = lows.iter().map(|&l| bar(l + 1.0, l, l)).collect();
        let (s, _) = support_resistance(&two, 2, 0.01).unwrap();
        assert_eq!(s, vec![3.01]);
        assert!(support_resistance(&two[..4], 2, 0.01).is_err());
    }
}
