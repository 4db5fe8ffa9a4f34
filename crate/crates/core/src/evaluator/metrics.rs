use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::SimTime;
use crate::scalar::Real;

use super::{EvalError, FillRecord, TradeRecord};

/// Reported instead of infinity when there are gains and no losses.
pub const PROFIT_FACTOR_NO_LOSSES: f64 = 999.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub sim_time: SimTime,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Annual rate, spread evenly over `periods_per_year`.
    #[serde(default)]
    pub risk_free_rate: f64,
    #[serde(default = "default_periods")]
    pub periods_per_year: f64,
}

fn default_periods() -> f64 {
    252.0
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            risk_free_rate: 0.0,
            periods_per_year: default_periods(),
        }
    }
}

impl MetricConfig {
    pub fn rf_per_period(&self) -> f64 {
        self.risk_free_rate / self.periods_per_year
    }
}

/// The built-in metric suite. JSON keys are the row labels of the usual
/// performance summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "ROI")]
    pub roi: Option<f64>,
    #[serde(rename = "Sharpe Ratio - SR")]
    pub sharpe: Option<f64>,
    #[serde(rename = "Annualized SR")]
    pub annualized_sharpe: Option<f64>,
    #[serde(rename = "Sortino Ratio")]
    pub sortino: Option<f64>,
    #[serde(rename = "Win Rate")]
    pub win_rate: Option<f64>,
    #[serde(rename = "Profit Factor")]
    pub profit_factor: Option<f64>,
    #[serde(rename = "Max Drawdown")]
    pub max_drawdown: Option<f64>,
    #[serde(rename = "Num Trades")]
    pub num_trades: u64,
    #[serde(rename = "Num Closed Trades")]
    pub num_closed_trades: u64,
    #[serde(rename = "Total Traded Volume")]
    pub total_traded_volume: f64,
    #[serde(rename = "Average Trade Size")]
    pub average_trade_size: Option<f64>,
    #[serde(rename = "ROIC")]
    pub roic: Option<f64>,
    #[serde(rename = "Profit per Trade")]
    pub profit_per_trade: Option<f64>,
    #[serde(rename = "Last Portfolio Value")]
    pub last_portfolio_value: f64,
    #[serde(rename = "Realized P&L")]
    pub realized_pnl: f64,
    /// Registered metrics, by name.
    #[serde(flatten)]
    pub custom: BTreeMap<String, Option<f64>>,
}

pub const BUILTIN_METRICS: [&str; 15] = [
    "ROI",
    "Sharpe Ratio - SR",
    "Annualized SR",
    "Sortino Ratio",
    "Win Rate",
    "Profit Factor",
    "Max Drawdown",
    "Num Trades",
    "Num Closed Trades",
    "Total Traded Volume",
    "Average Trade Size",
    "ROIC",
    "Profit per Trade",
    "Last Portfolio Value",
    "Realized P&L",
];

/// Everything a metric may look at. Money is in currency units.
#[derive(Debug, Clone, Copy)]
pub struct MetricInput<'a> {
    /// Closed trades followed by the open trade, if any.
    pub trades: &'a [TradeRecord<f64>],
    pub fills: &'a [FillRecord<f64>],
    pub equity: &'a [EquityPoint],
    pub config: &'a MetricConfig,
}

pub type MetricFn = Arc<dyn Fn(&MetricInput<'_>) -> Option<f64> + Send + Sync>;

/// User-supplied metrics, evaluated after the built-ins.
#[derive(Clone, Default)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, MetricFn>,
}

impl std::fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.metrics.keys()).finish()
    }
}

impl MetricRegistry {
    pub fn new() -> Self {
        MetricRegistry::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        metric: impl Fn(&MetricInput<'_>) -> Option<f64> + Send + Sync + 'static,
    ) -> Result<(), EvalError> {
        if BUILTIN_METRICS.contains(&name) || self.metrics.contains_key(name) {
            return Err(EvalError::DuplicateMetric(name.to_string()));
        }
        self.metrics.insert(name.to_string(), Arc::new(metric));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }

    fn evaluate(&self, input: &MetricInput<'_>) -> BTreeMap<String, Option<f64>> {
        self.metrics
            .iter()
            .map(|(name, f)| (name.clone(), finite(f(input))))
            .collect()
    }
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

/// Simple returns between consecutive equity points; a non-positive base
/// has no defined return and is skipped.
pub fn period_returns<T: Real>(equity: &[T]) -> Vec<T> {
    equity
        .windows(2)
        .filter(|w| w[0] > T::zero())
        .map(|w| w[1] / w[0] - T::one())
        .collect()
}

fn mean<T: Real>(xs: &[T]) -> Option<T> {
    (!xs.is_empty()).then(|| xs.iter().fold(T::zero(), |a, &x| a + x) / T::from_qty(xs.len() as u64))
}

/// Sample standard deviation; needs two values.
pub fn sample_std<T: Real>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    Some((ss / T::from_qty(xs.len() as u64 - 1)).sqrt())
}

/// Mean excess return over its standard deviation. `None` when the
/// deviation is zero or undefined.
pub fn sharpe<T: Real>(returns: &[T], rf_per_period: T) -> Option<T> {
    let excess: Vec<T> = returns.iter().map(|&r| r - rf_per_period).collect();
    let sd = sample_std(returns)?;
    (sd > T::zero()).then(|| mean(&excess).expect("non-empty") / sd)
}

/// Mean excess return over the deviation of the negative excess returns.
pub fn sortino<T: Real>(returns: &[T], rf_per_period: T) -> Option<T> {
    let excess: Vec<T> = returns.iter().map(|&r| r - rf_per_period).collect();
    let downside: Vec<T> = excess.iter().copied().filter(|&x| x < T::zero()).collect();
    let sd = sample_std(&downside)?;
    (sd > T::zero()).then(|| mean(&excess).expect("non-empty") / sd)
}

/// Largest fall from a running peak, as a fraction of that peak.
pub fn max_drawdown<T: Real>(equity: &[T]) -> Option<T> {
    let mut iter = equity.iter().copied();
    let mut peak = iter.next()?;
    let mut worst = T::zero();
    for v in iter {
        if v > peak {
            peak = v;
        } else if peak > T::zero() {
            let dd = (peak - v) / peak;
            if dd > worst {
                worst = dd;
            }
        }
    }
    Some(worst)
}

pub fn compute_metrics(
    trades: &[TradeRecord<f64>],
    fills: &[FillRecord<f64>],
    equity: &[EquityPoint],
    config: &MetricConfig,
    registry: &MetricRegistry,
) -> Result<MetricsReport, EvalError> {
    let first = equity.first().ok_or(EvalError::NoEquity)?;
    let last = equity.last().expect("non-empty");
    if let Some(w) = equity.windows(2).find(|w| w[1].sim_time < w[0].sim_time) {
        return Err(EvalError::OutOfOrder {
            at: w[1].sim_time,
            last: w[0].sim_time,
        });
    }
    let values: Vec<f64> = equity.iter().map(|p| p.value).collect();
    let returns = period_returns(&values);
    let rf = config.rf_per_period();
    let sharpe_ratio = sharpe(&returns, rf);

    let closed: Vec<&TradeRecord<f64>> = trades.iter().filter(|t| !t.open).collect();
    let n_closed = closed.len() as u64;
    let realized = closed.iter().map(|t| t.realized_pnl).fold(0.0, |a, b| a + b);
    let gross_profit = closed.iter().map(|t| t.realized_pnl).filter(|&p| p > 0.0).fold(0.0, |a, b| a + b);
    let gross_loss = closed.iter().map(|t| -t.realized_pnl).filter(|&l| l > 0.0).fold(0.0, |a, b| a + b);
    let winners = closed.iter().filter(|t| t.realized_pnl > 0.0).count();
    let deployed = closed.iter().map(|t| t.entry_price * t.qty as f64).fold(0.0, |a, b| a + b);
    let volume = fills.iter().map(|f| f.price * f.qty as f64).fold(0.0, |a, b| a + b);
    let per = |num: f64, den: f64| (den != 0.0).then(|| num / den);

    let profit_factor = if gross_loss > 0.0 {
        Some(gross_profit / gross_loss)
    } else if gross_profit > 0.0 {
        Some(PROFIT_FACTOR_NO_LOSSES)
    } else {
        None
    };

    let input = MetricInput {
        trades,
        fills,
        equity,
        config,
    };
    Ok(MetricsReport {
        roi: finite(per(last.value - first.value, first.value)),
        sharpe: finite(sharpe_ratio),
        annualized_sharpe: finite(sharpe_ratio.map(|s| s * config.periods_per_year.sqrt())),
        sortino: finite(sortino(&returns, rf)),
        win_rate: per(winners as f64, n_closed as f64),
        profit_factor: finite(profit_factor),
        max_drawdown: finite(max_drawdown(&values)),
        num_trades: fills.len() as u64,
        num_closed_trades: n_closed,
        total_traded_volume: volume,
        average_trade_size: per(volume, fills.len() as f64),
        roic: finite(per(realized, deployed)),
        profit_per_trade: per(realized, n_closed as f64),
        last_portfolio_value: last.value,
        realized_pnl: realized,
        custom: registry.evaluate(&input),
    })
}
