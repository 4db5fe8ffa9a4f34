use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bus::canonical_json;
use crate::domain::{Candle, Instrument, SimTime};

use super::{Direction, EquityPoint, EvalError, MetricsReport, TradeRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent_id: String,
    pub strategy: String,
    pub initial_cash: f64,
    pub metrics: MetricsReport,
}

/// Top level of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub symbol: String,
    pub mode: String,
    pub seed: u64,
    pub start: SimTime,
    pub end: SimTime,
    pub decision_points: u64,
    pub agents: Vec<AgentReport>,
}

/// Trades and equity of one agent, in currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSeries {
    pub agent_id: String,
    pub trades: Vec<TradeRecord<f64>>,
    pub equity: Vec<EquityPoint>,
}

pub fn report_json(report: &RunReport) -> Result<String, EvalError> {
    let mut s = canonical_json(report).map_err(|e| EvalError::Export(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn io(e: impl std::fmt::Display) -> EvalError {
    EvalError::Export(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trades_csv<W: Write>(out: W, series: &[AgentSeries]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "agent_id",
        "direction",
        "qty",
        "open_time",
        "close_time",
        "entry_price",
        "exit_price",
        "realized_pnl",
        "open",
    ])
    .map_err(io)?;
    for s in series {
        for t in &s.trades {
            w.write_record([
                s.agent_id.clone(),
                t.direction.as_str().to_string(),
                t.qty.to_string(),
                t.open_time.0.to_string(),
                t.close_time.map(|c| c.0.to_string()).unwrap_or_default(),
                t.entry_price.to_string(),
                opt(t.exit_price),
                t.realized_pnl.to_string(),
                t.open.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_equity_csv<W: Write>(out: W, series: &[AgentSeries]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent_id", "sim_time", "value"]).map_err(io)?;
    for s in series {
        for p in &s.equity {
            w.write_record([s.agent_id.clone(), p.sim_time.0.to_string(), p.value.to_string()])
                .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{x:.0}"),
        Some(x) => format!("{x:.4}"),
        None => "n/a".into(),
    }
}

const W: f64 = 960.0;
const PRICE_H: f64 = 300.0;
const VOL_H: f64 = 70.0;
const EQ_H: f64 = 140.0;
const PAD: f64 = 8.0;

struct Scale {
    t0: f64,
    t1: f64,
    lo: f64,
    hi: f64,
    top: f64,
    height: f64,
}

impl Scale {
    fn x(&self, t: f64) -> f64 {
        if self.t1 <= self.t0 {
            return W / 2.0;
        }
        PAD + (t - self.t0) / (self.t1 - self.t0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        let span = if self.hi > self.lo { self.hi - self.lo } else { 1.0 };
        self.top + (self.hi - v) / span * self.height
    }
}

fn marker(svg: &mut String, class: &str, up: bool, x: f64, y: f64, title: &str) {
    let (glyph, color, dy) = if up { ("\u{25B2}", "#1a7f37", 14.0) } else { ("\u{25BC}", "#cf222e", -6.0) };
    let _ = write!(
        svg,
        "<text class=\"marker {class}\" x=\"{x:.2}\" y=\"{:.2}\" fill=\"{color}\" font-size=\"12\" text-anchor=\"middle\">{glyph}<title>{}</title></text>",
        y + dy,
        escape(title)
    );
}

fn chart(candles: &[Candle], instrument: &Instrument, series: &AgentSeries) -> String {
    let t_first = candles
        .first()
        .map(|c| c.bar_start.0)
        .into_iter()
        .chain(series.equity.first().map(|p| p.sim_time.0));
    let t_last = candles
        .last()
        .map(|c| c.end().0)
        .into_iter()
        .chain(series.equity.last().map(|p| p.sim_time.0));
    let t0 = t_first.min().unwrap_or(0) as f64;
    let t1 = t_last.max().unwrap_or(1) as f64;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in candles {
        lo = lo.min(instrument.price_value(c.low));
        hi = hi.max(instrument.price_value(c.high));
    }
    for t in &series.trades {
        for p in [Some(t.entry_price), t.exit_price].into_iter().flatten() {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let price = Scale { t0, t1, lo, hi, top: 16.0, height: PRICE_H - 32.0 };
    let vmax = candles.iter().map(|c| c.volume).fold(0.0, f64::max).max(1e-12);
    let eq_lo = series.equity.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let eq_hi = series.equity.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let eq = Scale {
        t0,
        t1,
        lo: if eq_lo.is_finite() { eq_lo } else { 0.0 },
        hi: if eq_hi.is_finite() { eq_hi } else { 1.0 },
        top: PRICE_H + VOL_H + 12.0,
        height: EQ_H - 24.0,
    };

    let total_h = PRICE_H + VOL_H + EQ_H;
    let mut svg = String::new();
    let _ = write!(svg, "<svg viewBox=\"0 0 {W} {total_h}\" width=\"{W}\" height=\"{total_h}\" xmlns=\"http://www.w3.org/2000/svg\">");
    let _ = write!(svg, "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{total_h}\" fill=\"#fff\"/>");
    let bar_w = if candles.len() > 1 {
        ((W - 2.0 * PAD) / candles.len() as f64 * 0.7).max(0.5)
    } else {
        6.0
    };
    svg.push_str("<g class=\"candles\">");
    for c in candles {
        let (o, h, l, cl) = (
            instrument.price_value(c.open),
            instrument.price_value(c.high),
            instrument.price_value(c.low),
            instrument.price_value(c.close),
        );
        let x = price.x((c.bar_start.0 + c.timeframe.0 / 2) as f64);
        let color = if cl >= o { "#1a7f37" } else { "#cf222e" };
        let (top, bottom) = (price.y(o.max(cl)), price.y(o.min(cl)));
        let _ = write!(
            svg,
            "<g class=\"candle\"><line x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/><rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{color}\"/><title>{} O {o} H {h} L {l} C {cl} V {}</title></g>",
            price.y(h),
            price.y(l),
            x - bar_w / 2.0,
            (bottom - top).max(0.5),
            c.bar_start,
            c.volume
        );
        let vh = c.volume / vmax * (VOL_H - 8.0);
        let _ = write!(
            svg,
            "<rect class=\"volume\" x=\"{:.2}\" y=\"{:.2}\" width=\"{bar_w:.2}\" height=\"{vh:.2}\" fill=\"#8c959f\"/>",
            x - bar_w / 2.0,
            PRICE_H + VOL_H - vh
        );
    }
    svg.push_str("</g><g class=\"markers\">");
    for t in &series.trades {
        let entry_up = t.direction == Direction::Long;
        let entry_title = format!(
            "{} entry {} @ {}{}",
            t.direction.as_str(),
            t.qty,
            t.entry_price,
            t.entry_note.as_deref().map(|n| format!(": {n}")).unwrap_or_default()
        );
        marker(&mut svg, "entry", entry_up, price.x(t.open_time.0 as f64), price.y(t.entry_price), &entry_title);
        if let (Some(close), Some(exit)) = (t.close_time, t.exit_price) {
            let exit_title = format!(
                "{} exit {} @ {exit} pnl {}{}",
                t.direction.as_str(),
                t.qty,
                t.realized_pnl,
                t.exit_note.as_deref().map(|n| format!(": {n}")).unwrap_or_default()
            );
            marker(&mut svg, "exit", !entry_up, price.x(close.0 as f64), price.y(exit), &exit_title);
        }
    }
    svg.push_str("</g>");
    if !series.equity.is_empty() {
        let points: Vec<String> = series
            .equity
            .iter()
            .map(|p| format!("{:.2},{:.2}", eq.x(p.sim_time.0 as f64), eq.y(p.value)))
            .collect();
        let _ = write!(
            svg,
            "<polyline class=\"equity\" fill=\"none\" stroke=\"#0969da\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = write!(
            svg,
            "<text x=\"{PAD}\" y=\"{:.2}\" font-size=\"11\" fill=\"#57606a\">equity {:.2} .. {:.2}</text>",
            PRICE_H + VOL_H + 10.0,
            eq.lo,
            eq.hi
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Self-contained HTML page: metric table for every agent, and a price,
/// volume, marker and equity chart for the first `max_charts` agents.
pub fn render_html(
    report: &RunReport,
    candles: &[Candle],
    instrument: &Instrument,
    series: &[AgentSeries],
    max_charts: usize,
) -> String {
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{} run report</title>\
<style>body{{font-family:system-ui,sans-serif;margin:24px;color:#24292f}}table{{border-collapse:collapse;font-size:13px}}\
td,th{{border:1px solid #d0d7de;padding:3px 8px;text-align:right}}th:first-child,td:first-child{{text-align:left}}\
section{{margin:28px 0}}.empty{{color:#57606a;font-style:italic}}</style></head><body>",
        escape(&report.symbol)
    );
    let _ = write!(
        html,
        "<h1>{} ({})</h1><p>seed {} | {} to {} | {} decision points | {} agents</p>",
        escape(&report.symbol),
        escape(&report.mode),
        report.seed,
        report.start,
        report.end,
        report.decision_points,
        report.agents.len()
    );

    let custom: Vec<&String> = report
        .agents
        .first()
        .map(|a| a.metrics.custom.keys().collect())
        .unwrap_or_default();
    html.push_str("<table class=\"metrics\"><thead><tr><th>agent</th><th>strategy</th>");
    for name in super::BUILTIN_METRICS.iter().copied().chain(custom.iter().map(|s| s.as_str())) {
        let _ = write!(html, "<th>{}</th>", escape(name));
    }
    html.push_str("</tr></thead><tbody>");
    for a in &report.agents {
        let m = &a.metrics;
        let values = [
            m.roi,
            m.sharpe,
            m.annualized_sharpe,
            m.sortino,
            m.win_rate,
            m.profit_factor,
            m.max_drawdown,
            Some(m.num_trades as f64),
            Some(m.num_closed_trades as f64),
            Some(m.total_traded_volume),
            m.average_trade_size,
            m.roic,
            m.profit_per_trade,
            Some(m.last_portfolio_value),
            Some(m.realized_pnl),
        ];
        let _ = write!(html, "<tr><td>{}</td><td>{}</td>", escape(&a.agent_id), escape(&a.strategy));
        for v in values.into_iter().chain(custom.iter().map(|k| m.custom.get(*k).copied().flatten())) {
            let _ = write!(html, "<td>{}</td>", fmt_metric(v));
        }
        html.push_str("</tr>");
    }
    html.push_str("</tbody></table>");

    for s in series.iter().take(max_charts) {
        let _ = write!(html, "<section class=\"agent\"><h2>{}</h2>", escape(&s.agent_id));
        if s.trades.is_empty() {
            html.push_str("<p class=\"empty\">no trades</p>");
        }
        html.push_str(&chart(candles, instrument, s));
        html.push_str("</section>");
    }
    if series.len() > max_charts {
        let _ = write!(
            html,
            "<p class=\"empty\">charts shown for {max_charts} of {} agents</p>",
            series.len()
        );
    }
    html.push_str("</body></html>\n");
    html
}
