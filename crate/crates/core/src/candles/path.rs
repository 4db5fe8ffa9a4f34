use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::domain::{Candle, Price};

/// A point on the intra-bar path. `fraction` runs from 0 (open) to 1 (close).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub fraction: f64,
    pub price: Price,
}

/// Piecewise-linear price trajectory through one bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPath {
    pub waypoints: Vec<Waypoint>,
}

/// Position along a path: whole part is the segment index, fractional part the
/// distance into that segment. Exact so equal crossings compare equal.
pub type PathPosition = Ratio<i64>;

impl SyntheticPath {
    pub fn prices(&self) -> Vec<Price> {
        self.waypoints.iter().map(|w| w.price).collect()
    }

    pub fn open(&self) -> Price {
        self.waypoints[0].price
    }

    /// First position where the path is at or below `level`, and the price paid
    /// there: the open when the bar gaps through the level, else the level itself.
    pub fn first_at_or_below(&self, level: Price) -> Option<(PathPosition, Price)> {
        self.first_crossing(level, |p| p <= level)
    }

    pub fn first_at_or_above(&self, level: Price) -> Option<(PathPosition, Price)> {
        self.first_crossing(level, |p| p >= level)
    }

    fn first_crossing(
        &self,
        level: Price,
        reached: impl Fn(Price) -> bool,
    ) -> Option<(PathPosition, Price)> {
        let open = self.open();
        if reached(open) {
            return Some((Ratio::from_integer(0), open));
        }
        for (segment, pair) in self.waypoints.windows(2).enumerate() {
            let (from, to) = (pair[0].price, pair[1].price);
            if reached(to) {
                // `from` has not reached the level, so the segment is not flat.
                let into = Ratio::new(from.0 - level.0, from.0 - to.0);
                return Some((Ratio::from_integer(segment as i64) + into, level));
            }
        }
        None
    }

    /// Milliseconds into a bar of length `span_ms` at `position`, rounded
    /// down and kept inside the bar.
    pub fn offset_at(&self, position: PathPosition, span_ms: u64) -> u64 {
        let segments = (self.waypoints.len() - 1).max(1) as i128;
        let (n, d) = (*position.numer() as i128, *position.denom() as i128);
        let offset = (n * span_ms as i128 / (d * segments)) as u64;
        offset.min(span_ms.saturating_sub(1))
    }

    /// Converts a path position to a fraction of the bar.
    pub fn fraction_at(&self, position: PathPosition) -> f64 {
        let segments = (self.waypoints.len() - 1).max(1) as f64;
        (*position.numer() as f64 / *position.denom() as f64) / segments
    }
}

/// Deterministic path O -> L -> H -> C for up bars and O -> H -> L -> C for down bars.
pub fn synth_path(candle: &Candle) -> SyntheticPath {
    let (first, second) = if candle.is_up() {
        (candle.low, candle.high)
    } else {
        (candle.high, candle.low)
    };
    let points = [candle.open, first, second, candle.close];
    SyntheticPath {
        waypoints: points
            .iter()
            .enumerate()
            .map(|(i, &price)| Waypoint {
                fraction: i as f64 / 3.0,
                price,
            })
            .collect(),
    }
}
