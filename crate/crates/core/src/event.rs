//! Tail events `{X_n > x}` and `{X_n ≥ x}`.

use serde::{Deserialize, Serialize};

/// Relative slack used when comparing a terminal value with a threshold.
///
/// Sums of lattice increments carry rounding error of a few ulps, so a path
/// that should land exactly on the threshold may come out just above or just
/// below it. Values within this slack count as equal to the threshold.
pub const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailEvent {
    /// `X_n > x`
    Above(f64),
    /// `X_n ≥ x`
    AtLeast(f64),
}

impl TailEvent {
    pub fn level(&self) -> f64 {
        match *self {
            TailEvent::Above(x) | TailEvent::AtLeast(x) => x,
        }
    }

    #[inline]
    pub fn contains(&self, value: f64) -> bool {
        match *self {
            TailEvent::Above(x) => value > x + slack(x),
            TailEvent::AtLeast(x) => value >= x - slack(x),
        }
    }
}

#[inline]
fn slack(x: f64) -> f64 {
    if x.is_finite() {
        THRESHOLD_SLACK * (1.0 + x.abs())
    } else {
        0.0
    }
}
