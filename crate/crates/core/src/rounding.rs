//! Conversions from real-valued parameters (q·D, ε·D, 6q·D, q·n) to counts.
//!
//! | quantity              | rule           |
//! |-----------------------|----------------|
//! | window / period sizes | round half up  |
//! | thresholds, budgets   | floor          |
//! | delays                | ceil           |
//!
//! Each rule absorbs [`TOLERANCE`] of floating-point noise so that, e.g.,
//! `6 * 0.05 * 40` counts as exactly 12.

use crate::metric::TOLERANCE;

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + TOLERANCE).floor().max(0.0) as usize
}

pub fn floor_count(x: f64) -> usize {
    (x + TOLERANCE).floor().max(0.0) as usize
}

pub fn ceil_count(x: f64) -> usize {
    (x - TOLERANCE).ceil().max(0.0) as usize
}
