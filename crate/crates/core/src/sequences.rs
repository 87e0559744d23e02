//! Request sequences, prediction pairs, mismatch accounting and the
//! windowed error-rate assumption together with its online detector.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{Metric, MetricError, Point};
use crate::rounding::{floor_count, round_half_up};

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("interval [{i}, {j}] out of range for a sequence of length {n}")]
    Bounds { i: usize, j: usize, n: usize },
    #[error("sequence lengths differ: actual {actual}, predicted {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("actual and predicted sequences start at different points")]
    StartMismatch,
    #[error("invalid assumption parameter {name} = {value}: {reason}")]
    Param { name: &'static str, value: f64, reason: &'static str },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A start position `p_0` followed by requests `s_1..s_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestSequence {
    start: Point,
    items: Vec<Point>,
}

impl RequestSequence {
    pub fn new(start: Point, items: Vec<Point>) -> Self {
        Self { start, items }
    }

    pub fn start(&self) -> Point {
        self.start
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Request `s_t` for `1 <= t <= n`.
    pub fn at(&self, t: usize) -> Point {
        self.items[t - 1]
    }

    pub fn items(&self) -> &[Point] {
        &self.items
    }

    /// The first `t` requests.
    pub fn prefix(&self, t: usize) -> RequestSequence {
        Self { start: self.start, items: self.items[..t].to_vec() }
    }

    pub fn validate(&self, metric: &Metric) -> Result<(), MetricError> {
        metric.validate_point(&self.start)?;
        self.items.iter().try_for_each(|p| metric.validate_point(p))
    }
}

/// The actual sequence `s` and its prediction `ŝ`, aligned index by index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionPair {
    actual: RequestSequence,
    predicted: RequestSequence,
    #[serde(skip)]
    mismatch_prefix: Vec<usize>,
}

impl PredictionPair {
    pub fn new(actual: RequestSequence, predicted: RequestSequence) -> Result<Self, SequenceError> {
        if actual.len() != predicted.len() {
            return Err(SequenceError::LengthMismatch { actual: actual.len(), predicted: predicted.len() });
        }
        if actual.start() != predicted.start() {
            return Err(SequenceError::StartMismatch);
        }
        let mut mismatch_prefix = Vec::with_capacity(actual.len() + 1);
        mismatch_prefix.push(0);
        let mut acc = 0;
        for (a, p) in actual.items().iter().zip(predicted.items()) {
            acc += usize::from(a != p);
            mismatch_prefix.push(acc);
        }
        Ok(Self { actual, predicted, mismatch_prefix })
    }

    pub fn actual(&self) -> &RequestSequence {
        &self.actual
    }

    pub fn predicted(&self) -> &RequestSequence {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn is_mismatch(&self, t: usize) -> bool {
        self.mismatch_prefix[t] != self.mismatch_prefix[t - 1]
    }

    /// Number of indices `t` in `[i, j]` (1-based, inclusive) with `s_t != ŝ_t`.
    pub fn mismatches(&self, i: usize, j: usize) -> Result<usize, SequenceError> {
        let n = self.len();
        if i < 1 || i > j || j > n {
            return Err(SequenceError::Bounds { i, j, n });
        }
        Ok(self.mismatch_prefix[j] - self.mismatch_prefix[i - 1])
    }

    /// Mismatch count over the half-open interval `(a, b]`; zero when empty.
    pub(crate) fn mismatches_after(&self, a: usize, b: usize) -> usize {
        if b <= a {
            0
        } else {
            self.mismatch_prefix[b] - self.mismatch_prefix[a]
        }
    }

    /// Largest mismatch density `m(I)/ℓ` over all intervals `I` of length `ℓ`.
    pub fn max_window_density(&self, length: usize) -> Result<f64, SequenceError> {
        let n = self.len();
        if length < 1 || length > n {
            return Err(SequenceError::Bounds { i: 1, j: length, n });
        }
        let worst = (length..=n).map(|end| self.mismatch_prefix[end] - self.mismatch_prefix[end - length]).max();
        Ok(worst.unwrap_or(0) as f64 / length as f64)
    }

    /// Verdict of the windowed assumption with the same predicate the robust
    /// strategy evaluates online: the first `t` at which the window
    /// `[max(1, t-W+1), t]` holds more than `threshold` mismatches.
    pub fn check_assumption(&self, params: &AssumptionParams) -> AssumptionStatus {
        let mut detector = ViolationDetector::new(params);
        for t in 1..=self.len() {
            if detector.push(self.is_mismatch(t)) {
                return AssumptionStatus::Violated { at: t };
            }
        }
        AssumptionStatus::Holds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum AssumptionStatus {
    Holds,
    Violated { at: usize },
}

impl AssumptionStatus {
    pub fn holds(&self) -> bool {
        matches!(self, AssumptionStatus::Holds)
    }
}

/// Move-cost factor `D`, error rate `q` and window fraction `ε`, plus the
/// derived integer window `W = max(1, round(ε·D))` and threshold `⌊q·W⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionParams {
    d: f64,
    q: f64,
    epsilon: f64,
    window: usize,
    threshold: usize,
}

impl AssumptionParams {
    pub fn new(d: f64, q: f64, epsilon: f64) -> Result<Self, SequenceError> {
        if !(d > 1.0 && d.is_finite()) {
            return Err(SequenceError::Param { name: "D", value: d, reason: "must be a finite real > 1" });
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(SequenceError::Param { name: "q", value: q, reason: "must lie in (0, 1)" });
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(SequenceError::Param { name: "epsilon", value: epsilon, reason: "must lie in (0, 1]" });
        }
        let window = round_half_up(epsilon * d).max(1);
        let threshold = floor_count(q * window as f64);
        Ok(Self { d, q, epsilon, window, threshold })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Same `D` and `ε` with a different error rate.
    pub fn with_rate(&self, q: f64) -> Result<Self, SequenceError> {
        Self::new(self.d, q, self.epsilon)
    }
}

/// Online sliding-window mismatch counter. Fires on the first request whose
/// trailing window of at most `W` requests holds more than the threshold.
#[derive(Clone, Debug)]
pub struct ViolationDetector {
    window: VecDeque<bool>,
    size: usize,
    threshold: usize,
    count: usize,
}

impl ViolationDetector {
    pub fn new(params: &AssumptionParams) -> Self {
        Self::with_window(params.window(), params.threshold())
    }

    pub fn with_window(size: usize, threshold: usize) -> Self {
        assert!(size > 0, "window size must be positive");
        Self { window: VecDeque::with_capacity(size), size, threshold, count: 0 }
    }

    /// Records whether the latest request was mispredicted; returns true
    /// when the trailing window now exceeds the threshold.
    pub fn push(&mut self, mismatch: bool) -> bool {
        if self.window.len() == self.size && self.window.pop_front() == Some(true) {
            self.count -= 1;
        }
        self.window.push_back(mismatch);
        self.count += usize::from(mismatch);
        self.count > self.threshold
    }

    pub fn count(&self) -> usize {
        self.count
    }
}
