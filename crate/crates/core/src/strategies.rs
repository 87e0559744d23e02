//! Online strategies.
//!
//! Every strategy is driven once per request in increasing `t`: it sees
//! `s_t`, commits the page position `a_t`, and the simulator then charges
//! `D·d(a_{t-1}, a_t) + d(a_t, s_t)`.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::metric::{Metric, Point};
use crate::rounding::ceil_count;
use crate::sequences::{AssumptionParams, RequestSequence, SequenceError, ViolationDetector};
use crate::solver::{optimal_schedule, MoveTimes, Schedule, SolverError};

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Params(#[from] SequenceError),
    #[error("invalid strategy parameter {name} = {value}: {reason}")]
    Param { name: &'static str, value: f64, reason: &'static str },
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Position `a_0`.
    fn start(&self) -> Point;

    /// Commits `a_t` after seeing request `s_t`. Must be called with
    /// `t = steps_taken() + 1`.
    fn step(&mut self, t: usize, request: &Point) -> Point;

    fn steps_taken(&self) -> usize;

    /// Parameters for run reports.
    fn params(&self) -> Value {
        Value::Null
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    /// Request index at which a fallback switch happened, if any.
    fn switch_time(&self) -> Option<usize> {
        None
    }
}

fn check_order(expected: usize, t: usize) {
    assert_eq!(t, expected, "strategy stepped out of order");
}

/// Replays a precomputed schedule, ignoring the actual requests.
#[derive(Clone, Debug)]
pub struct FollowSchedule {
    name: &'static str,
    schedule: Schedule,
    params: Value,
    t: usize,
}

impl FollowSchedule {
    pub fn new(name: &'static str, schedule: Schedule) -> Self {
        Self { name, schedule, params: Value::Null, t: 0 }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
}

impl Strategy for FollowSchedule {
    fn name(&self) -> &'static str {
        self.name
    }

    fn start(&self) -> Point {
        self.schedule.at(0)
    }

    fn step(&mut self, t: usize, _request: &Point) -> Point {
        check_order(self.t + 1, t);
        self.t = t;
        self.schedule.at(t.min(self.schedule.steps()))
    }

    fn steps_taken(&self) -> usize {
        self.t
    }

    fn params(&self) -> Value {
        self.params.clone()
    }
}

/// Follows the offline optimum computed on the prediction.
pub fn predict_strategy(
    predicted: &RequestSequence,
    metric: &Metric,
    d: f64,
    candidates: &[Point],
) -> Result<FollowSchedule, StrategyError> {
    let solved = optimal_schedule(predicted, metric, d, candidates, &MoveTimes::All)?;
    Ok(FollowSchedule::new("predict", solved.schedule))
}

/// Follows the optimum on the prediction among schedules that move only at
/// multiples of `period`.
pub fn lazy_predict_strategy(
    predicted: &RequestSequence,
    metric: &Metric,
    d: f64,
    candidates: &[Point],
    period: usize,
) -> Result<FollowSchedule, StrategyError> {
    let solved = optimal_schedule(predicted, metric, d, candidates, &MoveTimes::Multiples(period.max(1)))?;
    let mut s = FollowSchedule::new("lazy_predict", solved.schedule);
    s.params = json!({ "period": period });
    Ok(s)
}

/// Moves only at multiples of `period`, each time jumping to wherever the
/// inner strategy currently is.
pub struct LazyMultiples {
    inner: Box<dyn Strategy>,
    period: usize,
    current: Point,
    t: usize,
}

pub fn lazy_multiples(inner: Box<dyn Strategy>, period: usize) -> LazyMultiples {
    assert!(period >= 1, "period must be positive");
    let current = inner.start();
    LazyMultiples { inner, period, current, t: 0 }
}

impl Strategy for LazyMultiples {
    fn name(&self) -> &'static str {
        "lazy_multiples"
    }

    fn start(&self) -> Point {
        self.inner.start()
    }

    fn step(&mut self, t: usize, request: &Point) -> Point {
        check_order(self.t + 1, t);
        self.t = t;
        let inner = self.inner.step(t, request);
        if t % self.period == 0 {
            self.current = inner;
        }
        self.current
    }

    fn steps_taken(&self) -> usize {
        self.t
    }

    fn params(&self) -> Value {
        json!({ "period": self.period, "inner": self.inner.name() })
    }

    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }
}

/// Occupies the inner strategy's position from `delay` steps earlier.
pub struct Delayed {
    inner: Box<dyn Strategy>,
    delay: usize,
    history: VecDeque<Point>,
    t: usize,
}

pub fn delayed(inner: Box<dyn Strategy>, delay: usize) -> Delayed {
    let mut history = VecDeque::with_capacity(delay + 1);
    history.push_back(inner.start());
    Delayed { inner, delay, history, t: 0 }
}

impl Delayed {
    pub fn delay(&self) -> usize {
        self.delay
    }
}

impl Strategy for Delayed {
    fn name(&self) -> &'static str {
        "delayed"
    }

    fn start(&self) -> Point {
        self.inner.start()
    }

    fn step(&mut self, t: usize, request: &Point) -> Point {
        check_order(self.t + 1, t);
        self.t = t;
        let now = self.inner.step(t, request);
        self.history.push_back(now);
        while self.history.len() > self.delay + 1 {
            self.history.pop_front();
        }
        *self.history.front().expect("history never empties")
    }

    fn steps_taken(&self) -> usize {
        self.t
    }

    fn params(&self) -> Value {
        json!({ "delay": self.delay, "inner": self.inner.name() })
    }

    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }
}

/// Randomized baseline: after serving a request remotely, migrate to the
/// requesting point with probability `1/(2D)`.
///
/// In the move-then-serve accounting the migration decided after `s_t` is
/// carried out at step `t+1`, so a coin won on the last request is never
/// paid for.
pub struct CoinFlip<R = ChaCha8Rng> {
    start: Point,
    position: Point,
    pending: Option<Point>,
    probability: f64,
    rng: R,
    seed: Option<u64>,
    t: usize,
}

pub fn coinflip_online(start: Point, d: f64, seed: u64) -> CoinFlip<ChaCha8Rng> {
    let mut c = CoinFlip::with_rng(start, d, ChaCha8Rng::seed_from_u64(seed));
    c.seed = Some(seed);
    c
}

impl<R: RngCore + Send> CoinFlip<R> {
    pub fn with_rng(start: Point, d: f64, rng: R) -> Self {
        assert!(d > 1.0, "D must exceed 1");
        Self { start, position: start, pending: None, probability: 1.0 / (2.0 * d), rng, seed: None, t: 0 }
    }
}

impl<R: RngCore + Send> Strategy for CoinFlip<R> {
    fn name(&self) -> &'static str {
        "coinflip"
    }

    fn start(&self) -> Point {
        self.start
    }

    fn step(&mut self, t: usize, request: &Point) -> Point {
        check_order(self.t + 1, t);
        self.t = t;
        if let Some(p) = self.pending.take() {
            self.position = p;
        }
        if self.position != *request && self.rng.random_bool(self.probability) {
            self.pending = Some(*request);
        }
        self.position
    }

    fn steps_taken(&self) -> usize {
        self.t
    }

    fn params(&self) -> Value {
        json!({ "move_probability": self.probability })
    }

    fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Exact expected cost of [`CoinFlip`] on a fixed sequence, obtained by
/// propagating the distribution of the page position.
pub fn coinflip_expected_cost(seq: &RequestSequence, metric: &Metric, d: f64) -> f64 {
    let prob = 1.0 / (2.0 * d);
    let mut dist: Vec<(Point, f64)> = vec![(seq.start(), 1.0)];
    let mut total = 0.0;
    let mut previous: Option<Point> = None;
    for request in seq.items() {
        if let Some(prev) = previous {
            let mut next: Vec<(Point, f64)> = Vec::with_capacity(dist.len() + 1);
            let mut index: HashMap<Point, usize> = HashMap::new();
            let mut add = |p: Point, w: f64, next: &mut Vec<(Point, f64)>| match index.get(&p) {
                Some(&i) => next[i].1 += w,
                None => {
                    index.insert(p, next.len());
                    next.push((p, w));
                }
            };
            for &(p, w) in &dist {
                if p != prev {
                    total += w * prob * d * metric.dist(&p, &prev);
                    add(prev, w * prob, &mut next);
                    add(p, w * (1.0 - prob), &mut next);
                } else {
                    add(p, w, &mut next);
                }
            }
            dist = next;
        }
        total += dist.iter().map(|(p, w)| w * metric.dist(p, request)).sum::<f64>();
        previous = Some(*request);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Following,
    Switched,
}

/// Snapshot of the robust strategy's bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustState {
    pub mode: Mode,
    pub shadow: Point,
    pub window_mismatches: usize,
    pub switch_time: Option<usize>,
}

/// Follows the prediction-based schedule with a delay of `⌈6qD⌉` while
/// tracking a fallback online strategy in the background; on the first
/// windowed-assumption violation it jumps to the fallback's position and
/// follows it from then on.
pub struct Robust {
    lazy: Delayed,
    shadow: Box<dyn Strategy>,
    shadow_position: Point,
    detector: ViolationDetector,
    predicted: Vec<Point>,
    params: AssumptionParams,
    mode: Mode,
    switch_time: Option<usize>,
    t: usize,
}

pub fn robust_strategy(
    predicted: &RequestSequence,
    params: AssumptionParams,
    online: Box<dyn Strategy>,
    metric: &Metric,
    candidates: &[Point],
) -> Result<Robust, StrategyError> {
    let follow = predict_strategy(predicted, metric, params.d(), candidates)?;
    let delay = ceil_count(6.0 * params.q() * params.d());
    let shadow_position = online.start();
    Ok(Robust {
        lazy: delayed(Box::new(follow), delay),
        shadow: online,
        shadow_position,
        detector: ViolationDetector::new(&params),
        predicted: predicted.items().to_vec(),
        params,
        mode: Mode::Following,
        switch_time: None,
        t: 0,
    })
}

impl Robust {
    pub fn state(&self) -> RobustState {
        RobustState {
            mode: self.mode,
            shadow: self.shadow_position,
            window_mismatches: self.detector.count(),
            switch_time: self.switch_time,
        }
    }

    pub fn delay(&self) -> usize {
        self.lazy.delay()
    }

    /// `t' = max(1, t - ⌈qD⌉ + 1)` for a switch at request `t`; the point
    /// the cost analysis splits the run at.
    pub fn analysis_split(&self) -> Option<usize> {
        let qd = ceil_count(self.params.q() * self.params.d());
        self.switch_time.map(|t| (t + 1).saturating_sub(qd).max(1))
    }
}

impl Strategy for Robust {
    fn name(&self) -> &'static str {
        "robust"
    }

    fn start(&self) -> Point {
        self.lazy.start()
    }

    fn step(&mut self, t: usize, request: &Point) -> Point {
        check_order(self.t + 1, t);
        self.t = t;
        self.shadow_position = self.shadow.step(t, request);
        let following = self.lazy.step(t, request);
        let mismatch = self.predicted.get(t - 1).is_none_or(|p| p != request);
        let fired = self.detector.push(mismatch);
        if self.mode == Mode::Following && fired {
            self.mode = Mode::Switched;
            self.switch_time = Some(t);
        }
        match self.mode {
            Mode::Following => following,
            Mode::Switched => self.shadow_position,
        }
    }

    fn steps_taken(&self) -> usize {
        self.t
    }

    fn params(&self) -> Value {
        json!({
            "q": self.params.q(),
            "epsilon": self.params.epsilon(),
            "window": self.params.window(),
            "threshold": self.params.threshold(),
            "delay": self.lazy.delay(),
            "online": self.shadow.name(),
        })
    }

    fn seed(&self) -> Option<u64> {
        self.shadow.seed()
    }

    fn switch_time(&self) -> Option<usize> {
        self.switch_time
    }
}

/// Strategy selection by name plus parameters, as used in harness configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Offline optimum on the actual sequence; the reference for ratios.
    Opt,
    Predict,
    /// Prediction optimum restricted to moves at multiples of `⌈εD⌉`.
    LazyPredict {
        epsilon: f64,
    },
    /// Prediction optimum followed with a fixed delay, or `⌈6qD⌉` if only
    /// `q` is given.
    DelayedPredict {
        #[serde(default)]
        delay: Option<usize>,
        #[serde(default)]
        q: Option<f64>,
    },
    Coinflip,
    Robust {
        q: f64,
        epsilon: f64,
    },
}

/// Everything needed to instantiate a [`StrategySpec`] on one instance.
pub struct StrategyContext<'a> {
    pub actual: &'a RequestSequence,
    pub predicted: &'a RequestSequence,
    pub metric: &'a Metric,
    pub d: f64,
    pub candidates: &'a [Point],
}

impl StrategySpec {
    pub fn label(&self) -> &'static str {
        match self {
            StrategySpec::Opt => "opt",
            StrategySpec::Predict => "predict",
            StrategySpec::LazyPredict { .. } => "lazy_predict",
            StrategySpec::DelayedPredict { .. } => "delayed_predict",
            StrategySpec::Coinflip => "coinflip",
            StrategySpec::Robust { .. } => "robust",
        }
    }

    /// Stable tag used to derive per-strategy random streams.
    pub fn stream_tag(&self) -> u64 {
        match self {
            StrategySpec::Opt => 1,
            StrategySpec::Predict => 2,
            StrategySpec::LazyPredict { .. } => 3,
            StrategySpec::DelayedPredict { .. } => 4,
            StrategySpec::Coinflip => 5,
            StrategySpec::Robust { .. } => 6,
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, StrategySpec::Coinflip | StrategySpec::Robust { .. })
    }

    pub fn build(&self, ctx: &StrategyContext<'_>, seed: u64) -> Result<Box<dyn Strategy>, StrategyError> {
        let start = ctx.actual.start();
        Ok(match self {
            StrategySpec::Opt => {
                let solved = optimal_schedule(ctx.actual, ctx.metric, ctx.d, ctx.candidates, &MoveTimes::All)?;
                Box::new(FollowSchedule::new("opt", solved.schedule))
            }
            StrategySpec::Predict => Box::new(predict_strategy(ctx.predicted, ctx.metric, ctx.d, ctx.candidates)?),
            StrategySpec::LazyPredict { epsilon } => {
                if !(*epsilon > 0.0) {
                    return Err(StrategyError::Param { name: "epsilon", value: *epsilon, reason: "must be positive" });
                }
                let period = ceil_count(epsilon * ctx.d).max(1);
                Box::new(lazy_predict_strategy(ctx.predicted, ctx.metric, ctx.d, ctx.candidates, period)?)
            }
            StrategySpec::DelayedPredict { delay, q } => {
                let delay = match (delay, q) {
                    (Some(d), _) => *d,
                    (None, Some(q)) => ceil_count(6.0 * q * ctx.d),
                    (None, None) => 0,
                };
                let follow = predict_strategy(ctx.predicted, ctx.metric, ctx.d, ctx.candidates)?;
                Box::new(delayed(Box::new(follow), delay))
            }
            StrategySpec::Coinflip => Box::new(coinflip_online(start, ctx.d, seed)),
            StrategySpec::Robust { q, epsilon } => {
                let params = AssumptionParams::new(ctx.d, *q, *epsilon)?;
                let online = Box::new(coinflip_online(start, ctx.d, seed));
                Box::new(robust_strategy(ctx.predicted, params, online, ctx.metric, ctx.candidates)?)
            }
        })
    }
}
