//! Offline optimum by dynamic programming over a finite candidate set.
//!
//! `C[t][p] = min_{p'} (C[t-1][p'] + D·d(p', p)) + d(p, s_t)`, with
//! `C[0][p_0] = 0` and every other start infinite. Positions are restricted
//! to the candidate set; on finite metrics expanded to all points this is
//! the true optimum, in the plane it is the optimum over the candidates.
//!
//! Ties between predecessors go to staying put, then to the lowest
//! candidate index, and the final position is the lowest-index minimizer.
//! Comparisons are exact so the DP agrees bit-for-bit with exhaustive
//! enumeration and with a ledger replay of its own schedule.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{Metric, MetricError, Point};
use crate::sequences::RequestSequence;
use crate::simulation::CostLedger;

/// Above this many candidates pairwise distances are computed on the fly.
const DIST_CACHE_LIMIT: usize = 2048;
/// Below this many candidates the relaxation runs single-threaded.
const PARALLEL_MIN: usize = 384;
const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("point {0} is not among the candidate positions")]
    NotCandidate(Point),
    #[error("no request precedes time 0, so the page cannot end away from the start")]
    NoRequestToMoveOn,
    #[error("time {t} exceeds sequence length {n}")]
    TimeOutOfRange { t: usize, n: usize },
    #[error("brute force over {candidates}^{steps} schedules exceeds the enumeration limit")]
    TooLarge { candidates: usize, steps: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Page positions `a_0..a_n` with `a_0 = p_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    positions: Vec<Point>,
}

impl Schedule {
    pub fn new(positions: Vec<Point>) -> Self {
        Self { positions }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    /// Number of requests the schedule covers.
    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    /// Position `a_t`.
    pub fn at(&self, t: usize) -> Point {
        self.positions[t]
    }

    /// Times `t >= 1` with `a_t != a_{t-1}`.
    pub fn move_times(&self) -> Vec<usize> {
        (1..self.positions.len()).filter(|&t| self.positions[t] != self.positions[t - 1]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    #[serde(rename = "positions")]
    pub schedule: Schedule,
    #[serde(rename = "cost")]
    pub total_cost: f64,
    pub move_cost: f64,
    pub serve_cost: f64,
}

impl SolveResult {
    fn from_schedule(schedule: Schedule, seq: &RequestSequence, metric: &Metric, d: f64) -> Self {
        let ledger = CostLedger::from_positions(schedule.positions(), seq, metric, d);
        Self { total_cost: ledger.total(), move_cost: ledger.move_total(), serve_cost: ledger.serve_total(), schedule }
    }
}

/// Steps at which a schedule may change position.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveTimes {
    #[default]
    All,
    /// Only at `t` with `t mod period == 0`.
    Multiples(usize),
    Only(BTreeSet<usize>),
}

impl MoveTimes {
    pub fn allows(&self, t: usize) -> bool {
        match self {
            MoveTimes::All => true,
            MoveTimes::Multiples(p) => *p <= 1 || t % p == 0,
            MoveTimes::Only(set) => set.contains(&t),
        }
    }
}

/// `{p_0} ∪ {s_1..s_n}` in first-appearance order, `p_0` first. With
/// `expand` set to a finite metric, every point of that metric is appended.
pub fn candidate_points(seq: &RequestSequence, expand: Option<&Metric>) -> Vec<Point> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let extra = expand.and_then(Metric::all_points).unwrap_or_default();
    for p in std::iter::once(seq.start()).chain(seq.items().iter().copied()).chain(extra) {
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

struct Tables {
    /// `C[upto][p]` for every candidate.
    costs: Vec<f64>,
    /// Predecessor index per step, row-major `[t-1][p]`.
    parents: Vec<u32>,
}

fn start_index(seq: &RequestSequence, candidates: &[Point]) -> Result<usize, SolverError> {
    candidates.iter().position(|c| *c == seq.start()).ok_or(SolverError::NotCandidate(seq.start()))
}

fn validate(seq: &RequestSequence, metric: &Metric, candidates: &[Point]) -> Result<(), SolverError> {
    seq.validate(metric)?;
    candidates.iter().try_for_each(|c| metric.validate_point(c))?;
    Ok(())
}

fn fill(
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
    candidates: &[Point],
    move_times: &MoveTimes,
    upto: usize,
) -> Tables {
    let k = candidates.len();
    let start = candidates.iter().position(|c| *c == seq.start()).expect("validated");
    let cache: Option<Vec<f64>> = (k <= DIST_CACHE_LIMIT).then(|| {
        let mut m = vec![0.0; k * k];
        for (i, a) in candidates.iter().enumerate() {
            for (j, b) in candidates.iter().enumerate() {
                m[i * k + j] = metric.dist(a, b);
            }
        }
        m
    });
    let dist = |i: usize, j: usize| match &cache {
        Some(m) => m[i * k + j],
        None => metric.dist(&candidates[i], &candidates[j]),
    };

    let mut costs = vec![f64::INFINITY; k];
    costs[start] = 0.0;
    let mut next = vec![0.0; k];
    let mut parents = Vec::with_capacity(upto * k);

    let relax = |costs: &[f64], p: usize| -> (f64, u32) {
        let mut best = costs[p];
        let mut arg = p;
        for (q, &c) in costs.iter().enumerate() {
            if q == p || c >= best {
                continue;
            }
            let via = c + d * dist(q, p);
            if via < best {
                best = via;
                arg = q;
            }
        }
        (best, arg as u32)
    };

    for t in 1..=upto {
        let request = seq.at(t);
        let step_parents: Vec<u32> = if move_times.allows(t) {
            let relaxed: Vec<(f64, u32)> = if k >= PARALLEL_MIN {
                (0..k).into_par_iter().map(|p| relax(&costs, p)).collect()
            } else {
                (0..k).map(|p| relax(&costs, p)).collect()
            };
            let mut ps = Vec::with_capacity(k);
            for (p, (c, arg)) in relaxed.into_iter().enumerate() {
                next[p] = c;
                ps.push(arg);
            }
            ps
        } else {
            next.copy_from_slice(&costs);
            (0..k as u32).collect()
        };
        for (p, c) in candidates.iter().enumerate() {
            next[p] += metric.dist(c, &request);
        }
        parents.extend(step_parents);
        std::mem::swap(&mut costs, &mut next);
    }
    Tables { costs, parents }
}

fn backtrack(tables: &Tables, candidates: &[Point], end: usize, steps: usize) -> Schedule {
    let k = candidates.len();
    let mut idx = vec![0usize; steps + 1];
    idx[steps] = end;
    for t in (1..=steps).rev() {
        idx[t - 1] = tables.parents[(t - 1) * k + idx[t]] as usize;
    }
    Schedule::new(idx.into_iter().map(|i| candidates[i]).collect())
}

/// Minimum-cost schedule over `candidates`, optionally moving only at the
/// steps allowed by `move_times`.
pub fn optimal_schedule(
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
    candidates: &[Point],
    move_times: &MoveTimes,
) -> Result<SolveResult, SolverError> {
    validate(seq, metric, candidates)?;
    start_index(seq, candidates)?;
    let n = seq.len();
    let tables = fill(seq, metric, d, candidates, move_times, n);
    let mut end = 0;
    for (p, &c) in tables.costs.iter().enumerate() {
        if c < tables.costs[end] {
            end = p;
        }
    }
    let schedule = backtrack(&tables, candidates, end, n);
    Ok(SolveResult::from_schedule(schedule, seq, metric, d))
}

/// Cost `O^end_{0,t}` of the cheapest schedule over `s_1..s_t` that finishes
/// at `end`.
pub fn constrained_optimal(
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
    t: usize,
    end: &Point,
    candidates: &[Point],
) -> Result<f64, SolverError> {
    validate(seq, metric, candidates)?;
    start_index(seq, candidates)?;
    if t > seq.len() {
        return Err(SolverError::TimeOutOfRange { t, n: seq.len() });
    }
    let end_idx = candidates.iter().position(|c| c == end).ok_or(SolverError::NotCandidate(*end))?;
    if t == 0 && *end != seq.start() {
        return Err(SolverError::NoRequestToMoveOn);
    }
    let tables = fill(seq, metric, d, candidates, &MoveTimes::All, t);
    Ok(tables.costs[end_idx])
}

/// Exhaustive search over all `k^n` candidate schedules. Used as an
/// independent check on [`optimal_schedule`] for tiny instances.
pub fn brute_force_schedule(
    seq: &RequestSequence,
    metric: &Metric,
    d: f64,
    candidates: &[Point],
) -> Result<SolveResult, SolverError> {
    validate(seq, metric, candidates)?;
    start_index(seq, candidates)?;
    let (k, n) = (candidates.len(), seq.len());
    if (k as f64).powi(n as i32) > BRUTE_FORCE_LIMIT {
        return Err(SolverError::TooLarge { candidates: k, steps: n });
    }

    struct Search<'a> {
        seq: &'a RequestSequence,
        metric: &'a Metric,
        d: f64,
        candidates: &'a [Point],
        path: Vec<Point>,
        best: Option<(f64, Vec<Point>)>,
    }

    impl Search<'_> {
        fn go(&mut self, acc: f64) {
            let t = self.path.len();
            if t > self.seq.len() {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.path.clone()));
                }
                return;
            }
            let prev = *self.path.last().expect("path starts at p_0");
            let request = self.seq.at(t);
            for c in self.candidates {
                let cost = acc + self.d * self.metric.dist(&prev, c) + self.metric.dist(c, &request);
                self.path.push(*c);
                self.go(cost);
                self.path.pop();
            }
        }
    }

    let mut search = Search { seq, metric, d, candidates, path: vec![seq.start()], best: None };
    search.go(0.0);
    let (_, positions) = search.best.expect("at least one schedule");
    Ok(SolveResult::from_schedule(Schedule::new(positions), seq, metric, d))
}
