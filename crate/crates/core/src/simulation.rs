//! Run loop and cost accounting.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metric::{Metric, MetricError, Point};
use crate::sequences::{AssumptionStatus, PredictionPair, RequestSequence};
use crate::solver::Schedule;
use crate::strategies::Strategy;

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("strategy {name} has already taken {steps} steps; runs need a fresh strategy")]
    StrategyReused { name: &'static str, steps: usize },
    #[error("strategy starts at {strategy} but the sequence starts at {sequence}")]
    StartMismatch { strategy: Point, sequence: Point },
    #[error("schedule has {positions} positions, expected {expected}")]
    Shape { positions: usize, expected: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Per-step move and serve charges with prefix sums `C_t`.
///
/// `C_t = (C_{t-1} + move_t) + serve_t`, the same association the offline
/// DP uses, so ledger totals and DP costs agree exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    move_costs: Vec<f64>,
    serve_costs: Vec<f64>,
    prefix: Vec<f64>,
}

impl CostLedger {
    pub(crate) fn from_positions(positions: &[Point], seq: &RequestSequence, metric: &Metric, d: f64) -> Self {
        let n = seq.len();
        debug_assert_eq!(positions.len(), n + 1);
        let mut move_costs = Vec::with_capacity(n);
        let mut serve_costs = Vec::with_capacity(n);
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for t in 1..=n {
            let mv = d * metric.dist(&positions[t - 1], &positions[t]);
            let serve = metric.dist(&positions[t], &seq.at(t));
            acc = acc + mv + serve;
            move_costs.push(mv);
            serve_costs.push(serve);
            prefix.push(acc);
        }
        Self { move_costs, serve_costs, prefix }
    }

    pub fn steps(&self) -> usize {
        self.move_costs.len()
    }

    /// `D·d(a_{t-1}, a_t)`.
    pub fn move_cost(&self, t: usize) -> f64 {
        self.move_costs[t - 1]
    }

    /// `d(a_t, s_t)`.
    pub fn serve_cost(&self, t: usize) -> f64 {
        self.serve_costs[t - 1]
    }

    /// `C_t`, the cost of the first `t` steps.
    pub fn prefix(&self, t: usize) -> f64 {
        self.prefix[t]
    }

    /// `C_{t1,t2} = C_{t2} - C_{t1}`.
    pub fn interval(&self, t1: usize, t2: usize) -> f64 {
        self.prefix[t2] - self.prefix[t1]
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().expect("prefix holds C_0")
    }

    pub fn move_total(&self) -> f64 {
        self.move_costs.iter().sum()
    }

    pub fn serve_total(&self) -> f64 {
        self.serve_costs.iter().sum()
    }

    /// Move charges over steps `(t1, t2]`.
    pub fn moves_between(&self, t1: usize, t2: usize) -> f64 {
        self.move_costs[t1..t2].iter().sum()
    }

    /// Serve charges over steps `(t1, t2]`.
    pub fn serves_between(&self, t1: usize, t2: usize) -> f64 {
        self.serve_costs[t1..t2].iter().sum()
    }
}

/// Outcome of driving one strategy over one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub d: f64,
    pub schedule: Schedule,
    pub ledger: CostLedger,
    pub switch_time: Option<usize>,
    pub assumption: Option<AssumptionStatus>,
}

impl RunReport {
    pub fn total_cost(&self) -> f64 {
        self.ledger.total()
    }
}

/// Drives `strategy` over `seq`: for each `t`, `a_t = step(t, s_t)`, then
/// charges the move followed by the serve.
pub fn run(
    strategy: &mut dyn Strategy,
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
) -> Result<RunReport, SimulationError> {
    if strategy.steps_taken() != 0 {
        return Err(SimulationError::StrategyReused { name: strategy.name(), steps: strategy.steps_taken() });
    }
    if strategy.start() != seq.start() {
        return Err(SimulationError::StartMismatch { strategy: strategy.start(), sequence: seq.start() });
    }
    seq.validate(metric)?;
    let mut positions = Vec::with_capacity(seq.len() + 1);
    positions.push(seq.start());
    for (i, request) in seq.items().iter().enumerate() {
        let a = strategy.step(i + 1, request);
        metric.validate_point(&a)?;
        positions.push(a);
    }
    let ledger = CostLedger::from_positions(&positions, seq, metric, d);
    Ok(RunReport {
        strategy: strategy.name().to_string(),
        params: strategy.params(),
        seed: strategy.seed(),
        d,
        schedule: Schedule::new(positions),
        ledger,
        switch_time: strategy.switch_time(),
        assumption: None,
    })
}

/// Recomputes the ledger of a schedule from positions alone.
pub fn cost_of(
    schedule: &Schedule,
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
) -> Result<CostLedger, SimulationError> {
    let expected = seq.len() + 1;
    if schedule.positions().len() != expected {
        return Err(SimulationError::Shape { positions: schedule.positions().len(), expected });
    }
    seq.validate(metric)?;
    schedule.positions().iter().try_for_each(|p| metric.validate_point(p))?;
    Ok(CostLedger::from_positions(schedule.positions(), seq, metric, d))
}

/// One interval `(start, end]` of the breakpoint decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalTerm {
    pub start: usize,
    pub end: usize,
    pub mismatches: usize,
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub move_cost: f64,
    pub term: f64,
}

/// Both sides of the per-interval bound
/// `A_n - O_n <= 2 Σ_i m(I_i) (ΔA_i + ΔO_i - c_move_i) / |I_i|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalBound {
    pub lhs: f64,
    pub rhs: f64,
    pub breakpoints: Vec<usize>,
    pub intervals: Vec<IntervalTerm>,
    /// Cost of the algorithm's schedule on the prediction.
    pub alg_on_predicted: f64,
    /// Cost of the optimum's schedule on the prediction.
    pub opt_on_predicted: f64,
}

impl IntervalBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// Interval decomposition of `A_n - O_n` for the prediction-following
/// algorithm against the optimum.
///
/// A schedule "moves at time `t`" when its position changes between
/// requests `t` and `t+1`, so breakpoints are `{0, n} ∪ {t-1 : a_t != a_{t-1}
/// or o_t != o_{t-1}}` and both schedules are stationary on every interval.
pub fn interval_bound(
    alg: &RunReport,
    opt: &RunReport,
    pair: &PredictionPair,
    metric: &Metric,
    d: f64,
) -> Result<IntervalBound, SimulationError> {
    let n = pair.len();
    for report in [alg, opt] {
        if report.ledger.steps() != n || report.schedule.steps() != n {
            return Err(SimulationError::Shape { positions: report.schedule.positions().len(), expected: n + 1 });
        }
    }
    let mut breakpoints: Vec<usize> = vec![0, n];
    for report in [alg, opt] {
        breakpoints.extend(report.schedule.move_times().into_iter().map(|t| t - 1));
    }
    breakpoints.sort_unstable();
    breakpoints.dedup();

    let mut rhs = 0.0;
    let mut intervals = Vec::with_capacity(breakpoints.len());
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let m = pair.mismatches_after(lo, hi);
        let alg_cost = alg.ledger.interval(lo, hi);
        let opt_cost = opt.ledger.interval(lo, hi);
        let move_cost = alg.ledger.moves_between(lo, hi) + opt.ledger.moves_between(lo, hi);
        let serving = alg.ledger.serves_between(lo, hi) + opt.ledger.serves_between(lo, hi);
        let term = 2.0 * m as f64 * serving / (hi - lo) as f64;
        rhs += term;
        intervals.push(IntervalTerm { start: lo, end: hi, mismatches: m, alg_cost, opt_cost, move_cost, term });
    }
    let predicted = pair.predicted();
    let alg_on_predicted = cost_of(&alg.schedule, predicted, metric, d)?.total();
    let opt_on_predicted = cost_of(&opt.schedule, predicted, metric, d)?.total();
    Ok(IntervalBound {
        lhs: alg.ledger.total() - opt.ledger.total(),
        rhs,
        breakpoints,
        intervals,
        alg_on_predicted,
        opt_on_predicted,
    })
}
