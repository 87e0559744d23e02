//! Experiment orchestration: sweeps, result tables, ratio reports,
//! assumption checks and the lower-bound and robustness evaluations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{
    alternating, bounded_flip, brownian_process, gaussian_perturb, line_process, lower_bound_instance, sticky_walk,
    suffix_adversary, Branch, FlipDistribution, GeneratorError,
};
use crate::io::IoError;
use crate::metric::{Metric, Point};
use crate::rounding::floor_count;
use crate::sequences::{AssumptionParams, AssumptionStatus, PredictionPair, RequestSequence, SequenceError};
use crate::simulation::{run, RunReport, SimulationError};
use crate::solver::{candidate_points, optimal_schedule, MoveTimes, SolverError};
use crate::strategies::{coinflip_expected_cost, StrategyContext, StrategyError, StrategySpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("no opt row for instance {0}")]
    MissingOpt(String),
    #[error("row {row} not found: the results file has {rows} rows")]
    NoSuchRow { row: usize, rows: usize },
    #[error("row {row} ({instance_id}, {strategy}) is not produced by this config")]
    UnknownRow { row: usize, instance_id: String, strategy: String },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: field.into(), reason: reason.into() }
}

const PATH_TAG: u64 = 14;
const NOISE_TAG: u64 = 15;

/// Counter-based split of the master seed: one independent ChaCha stream
/// per `(instance, tag, replica)`, so adding a strategy or replica never
/// shifts another stream.
pub fn derive_seed(master: u64, instance: u64, tag: u64, replica: u64) -> u64 {
    assert!(instance < 1 << 36 && tag < 1 << 8 && replica < 1 << 20, "seed coordinates out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((instance << 28) | (tag << 20) | replica);
    rng.next_u64()
}

/// Which positions the offline solvers may use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    /// `p_0` plus the requests of the sequence being solved.
    #[default]
    Own,
    /// `p_0` plus the requests of both sequences.
    Union,
    /// Own requests plus every point of a finite metric.
    Full,
}

impl CandidatePolicy {
    /// Candidate sets for the prediction-side and actual-side solvers.
    pub fn sets(&self, pair: &PredictionPair, metric: &Metric) -> (Vec<Point>, Vec<Point>) {
        match self {
            CandidatePolicy::Own => (candidate_points(pair.predicted(), None), candidate_points(pair.actual(), None)),
            CandidatePolicy::Union => {
                let mut both = pair.predicted().items().to_vec();
                both.extend_from_slice(pair.actual().items());
                let c = candidate_points(&RequestSequence::new(pair.actual().start(), both), None);
                (c.clone(), c)
            }
            CandidatePolicy::Full => {
                (candidate_points(pair.predicted(), Some(metric)), candidate_points(pair.actual(), Some(metric)))
            }
        }
    }
}

/// How instances are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dataset {
    /// `ŝ_t = (t, 0)`, actual = prediction plus Gaussian noise.
    Line,
    /// Planar random walk, actual = prediction plus Gaussian noise.
    Brownian,
    /// Sticky walk over `points` labels of the uniform metric, actual =
    /// prediction with bounded flips at rate `q`.
    Uniform {
        points: usize,
        switch: f64,
        #[serde(default = "one")]
        epsilon: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Dataset {
    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Line => "line",
            Dataset::Brownian => "brownian",
            Dataset::Uniform { .. } => "uniform",
        }
    }

    fn metric(&self) -> Metric {
        match self {
            Dataset::Line | Dataset::Brownian => Metric::Euclidean2d,
            Dataset::Uniform { .. } => Metric::Uniform,
        }
    }

    fn noise_name(&self) -> &'static str {
        match self {
            Dataset::Line | Dataset::Brownian => "sigma",
            Dataset::Uniform { .. } => "q",
        }
    }

    fn prediction(&self, n: usize, seed: u64) -> Result<RequestSequence, HarnessError> {
        Ok(match self {
            Dataset::Line => line_process(n),
            Dataset::Brownian => brownian_process(n, seed),
            Dataset::Uniform { points, switch, .. } => {
                let pool: Vec<Point> = (0..*points).map(Point::Label).collect();
                sticky_walk(n, &pool, *switch, seed)?
            }
        })
    }

    fn actual(&self, predicted: &RequestSequence, d: f64, x: f64, seed: u64) -> Result<RequestSequence, HarnessError> {
        Ok(match self {
            Dataset::Line | Dataset::Brownian => gaussian_perturb(predicted, x, seed)?,
            Dataset::Uniform { points, epsilon, .. } => {
                if x == 0.0 {
                    return Ok(predicted.clone());
                }
                let pool: Vec<Point> = (0..*points).map(Point::Label).collect();
                bounded_flip(predicted, x, *epsilon, d, &FlipDistribution::Uniform { pool }, seed)?
            }
        })
    }
}

/// A grid of `(D, x)` points, `x` being σ for planar datasets and the flip
/// rate `q` for the uniform one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub d: Vec<f64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

fn default_runs() -> usize {
    100
}

fn default_strategies() -> Vec<StrategySpec> {
    vec![StrategySpec::Opt, StrategySpec::Predict, StrategySpec::Coinflip]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    /// Replicas per randomized strategy.
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub datasets: Vec<Dataset>,
    pub sweeps: Vec<Sweep>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub candidates: CandidatePolicy,
    /// Upper bounds on `cost / cost(opt)` keyed by strategy label.
    #[serde(default)]
    pub bounds: BTreeMap<String, f64>,
    /// Also bound predict by `(1+4q)/(1-4q)` on flip-rate sweeps.
    #[serde(default)]
    pub theory_bound: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config: Self = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() })?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(config_err("runs", "must be at least 1"));
        }
        if self.runs > 1 << 20 {
            return Err(config_err("runs", "must be below 2^20"));
        }
        if self.datasets.is_empty() {
            return Err(config_err("datasets", "must not be empty"));
        }
        if self.sweeps.is_empty() {
            return Err(config_err("sweeps", "must not be empty"));
        }
        if self.strategies.is_empty() {
            return Err(config_err("strategies", "must not be empty"));
        }
        for (i, ds) in self.datasets.iter().enumerate() {
            if let Dataset::Uniform { points, switch, epsilon } = ds {
                if *points < 2 {
                    return Err(config_err(format!("datasets[{i}].points"), "needs at least 2 points"));
                }
                if !(0.0..=1.0).contains(switch) {
                    return Err(config_err(format!("datasets[{i}].switch"), "must lie in [0, 1]"));
                }
                if !(*epsilon > 0.0 && *epsilon <= 1.0) {
                    return Err(config_err(format!("datasets[{i}].epsilon"), "must lie in (0, 1]"));
                }
            }
        }
        for (i, sweep) in self.sweeps.iter().enumerate() {
            let field = |f: &str| format!("sweeps[{i}].{f}");
            if sweep.d.is_empty() {
                return Err(config_err(field("d"), "must not be empty"));
            }
            if let Some(d) = sweep.d.iter().find(|d| !(**d > 1.0 && d.is_finite())) {
                return Err(config_err(field("d"), format!("{d} is not a finite real > 1")));
            }
            if sweep.sigma.is_empty() == sweep.q.is_empty() {
                return Err(config_err(field("sigma"), "give exactly one of `sigma` and `q`, nonempty"));
            }
            if let Some(s) = sweep.sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                return Err(config_err(field("sigma"), format!("{s} is not a finite real >= 0")));
            }
            if let Some(q) = sweep.q.iter().find(|q| !(**q >= 0.0 && **q < 1.0)) {
                return Err(config_err(field("q"), format!("{q} is not in [0, 1)")));
            }
            for ds in &self.datasets {
                let wants = ds.noise_name();
                let has = if sweep.sigma.is_empty() { "q" } else { "sigma" };
                if wants != has {
                    return Err(config_err(field(has), format!("dataset {} is swept over `{wants}`", ds.name())));
                }
            }
        }
        if let Some(k) = self.bounds.keys().find(|k| !self.strategies.iter().any(|s| s.label() == k.as_str())) {
            return Err(config_err(format!("bounds.{k}"), "names no configured strategy"));
        }
        Ok(())
    }

    /// Every sweep point in config order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for (dataset_index, dataset) in self.datasets.iter().enumerate() {
            for sweep in &self.sweeps {
                let xs = if sweep.sigma.is_empty() { &sweep.q } else { &sweep.sigma };
                for &d in &sweep.d {
                    for &x in xs {
                        let index = out.len();
                        out.push(SweepPoint {
                            index,
                            dataset_index,
                            dataset: dataset.clone(),
                            sweep: sweep.name.clone(),
                            d,
                            x,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub dataset_index: usize,
    pub dataset: Dataset,
    pub sweep: String,
    pub d: f64,
    pub x: f64,
}

impl SweepPoint {
    pub fn instance_id(&self) -> String {
        format!("{}:{}:D={}:{}={}", self.dataset.name(), self.sweep, self.d, self.dataset.noise_name(), self.x)
    }

    /// The instance at this point. Prediction and noise seeds depend only
    /// on the dataset, so all points of a dataset share their randomness.
    pub fn instance(&self, config: &ExperimentConfig) -> Result<Instance, HarnessError> {
        let path_seed = derive_seed(config.seed, self.dataset_index as u64, PATH_TAG, 0);
        let noise_seed = derive_seed(config.seed, self.dataset_index as u64, NOISE_TAG, 0);
        let predicted = self.dataset.prediction(config.n, path_seed)?;
        let actual = self.dataset.actual(&predicted, self.d, self.x, noise_seed)?;
        Ok(Instance {
            pair: PredictionPair::new(actual, predicted)?,
            metric: self.dataset.metric(),
            d: self.d,
            noise_seed,
        })
    }
}

pub struct Instance {
    pub pair: PredictionPair,
    pub metric: Metric,
    pub d: f64,
    pub noise_seed: u64,
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub strategy: String,
    pub seed: u64,
    #[serde(rename = "D")]
    pub d: f64,
    pub sigma_or_q: f64,
    pub total_cost: f64,
    pub move_cost: f64,
    pub serve_cost: f64,
    pub switch_time: Option<usize>,
    pub runs: usize,
    pub cost_std: f64,
    pub dataset: String,
    pub sweep: String,
}

/// Runs `spec` on an instance; randomized strategies are replicated
/// `runs` times and averaged.
pub fn evaluate_strategy(
    spec: &StrategySpec,
    instance: &Instance,
    candidates: (&[Point], &[Point]),
    master: u64,
    instance_index: u64,
    runs: usize,
) -> Result<(Vec<RunReport>, u64), HarnessError> {
    let (predicted_side, actual_side) = candidates;
    let ctx = StrategyContext {
        actual: instance.pair.actual(),
        predicted: instance.pair.predicted(),
        metric: &instance.metric,
        d: instance.d,
        candidates: if matches!(spec, StrategySpec::Opt) { actual_side } else { predicted_side },
    };
    let replicas = if spec.is_randomized() { runs } else { 1 };
    let seeds: Vec<u64> =
        (0..replicas).map(|r| derive_seed(master, instance_index, spec.stream_tag(), r as u64)).collect();
    let reports: Result<Vec<RunReport>, HarnessError> = seeds
        .par_iter()
        .map(|&seed| {
            let mut strategy = spec.build(&ctx, seed)?;
            Ok(run(strategy.as_mut(), instance.pair.actual(), &instance.metric, instance.d)?)
        })
        .collect();
    Ok((reports?, seeds[0]))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(point: &SweepPoint, spec: &StrategySpec, seed: u64, reports: &[RunReport]) -> ResultRow {
    let totals: Vec<f64> = reports.iter().map(|r| r.ledger.total()).collect();
    let moves: Vec<f64> = reports.iter().map(|r| r.ledger.move_total()).collect();
    let serves: Vec<f64> = reports.iter().map(|r| r.ledger.serve_total()).collect();
    let (total_cost, cost_std) = mean_std(&totals);
    ResultRow {
        instance_id: point.instance_id(),
        strategy: spec.label().to_string(),
        seed,
        d: point.d,
        sigma_or_q: point.x,
        total_cost,
        move_cost: mean_std(&moves).0,
        serve_cost: mean_std(&serves).0,
        switch_time: reports[0].switch_time,
        runs: reports.len(),
        cost_std,
        dataset: point.dataset.name().to_string(),
        sweep: point.sweep.clone(),
    }
}

/// Rows for one sweep point, in configured strategy order.
pub fn point_rows(config: &ExperimentConfig, point: &SweepPoint) -> Result<Vec<ResultRow>, HarnessError> {
    let instance = point.instance(config)?;
    let (pc, ac) = config.candidates.sets(&instance.pair, &instance.metric);
    config
        .strategies
        .iter()
        .map(|spec| {
            let (reports, seed) =
                evaluate_strategy(spec, &instance, (&pc, &ac), config.seed, point.index as u64, config.runs)?;
            Ok(summarize(point, spec, seed, &reports))
        })
        .collect()
}

/// Runs every sweep point in parallel; rows come back in config order.
pub fn compare(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let per_point: Result<Vec<Vec<ResultRow>>, HarnessError> =
        config.points().par_iter().map(|p| point_rows(config, p)).collect();
    Ok(per_point?.into_iter().flatten().collect())
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let file_err = |e: &dyn std::fmt::Display| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| file_err(&e))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| file_err(&e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| file_err(&e))?;
    }
    writer.flush().map_err(|e| file_err(&e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let file_err = |e: &dyn std::fmt::Display| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() };
    let mut reader = csv::Reader::from_path(path).map_err(|e| file_err(&e))?;
    reader.deserialize().map(|r| r.map_err(|e| file_err(&e))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub instance_id: String,
    pub strategy: String,
    #[serde(rename = "D")]
    pub d: f64,
    pub sigma_or_q: f64,
    pub ratio: f64,
    pub bound: Option<f64>,
    pub violated: bool,
}

/// `(1+4q)/(1-4q)`, or infinity once `q >= 1/4`.
pub fn uniform_bound(q: f64) -> f64 {
    if 4.0 * q >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 + 4.0 * q) / (1.0 - 4.0 * q)
    }
}

/// `cost / cost(opt)` per row, with `0/0 = 1`.
pub fn ratio_report(
    rows: &[ResultRow],
    bounds: &BTreeMap<String, f64>,
    theory_bound: bool,
) -> Result<Vec<RatioRow>, HarnessError> {
    let mut opt: BTreeMap<&str, f64> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.strategy == "opt") {
        opt.insert(&row.instance_id, row.total_cost);
    }
    rows.iter()
        .map(|row| {
            let base =
                *opt.get(row.instance_id.as_str()).ok_or_else(|| HarnessError::MissingOpt(row.instance_id.clone()))?;
            let ratio = if base == 0.0 {
                if row.total_cost == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                row.total_cost / base
            };
            let mut bound = bounds.get(&row.strategy).copied();
            if theory_bound && row.strategy == "predict" && row.dataset == "uniform" {
                let b = uniform_bound(row.sigma_or_q);
                bound = Some(bound.map_or(b, |c| c.min(b)));
            }
            Ok(RatioRow {
                instance_id: row.instance_id.clone(),
                strategy: row.strategy.clone(),
                d: row.d,
                sigma_or_q: row.sigma_or_q,
                ratio,
                bound,
                violated: bound.is_some_and(|b| ratio > b + 1e-9),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub ratios: Vec<RatioRow>,
    pub violations: usize,
}

/// Recomputes row `row` (0-based, header excluded) of a results file and
/// returns `(stored, recomputed)`.
pub fn replay(config: &ExperimentConfig, csv_path: &Path, row: usize) -> Result<(ResultRow, ResultRow), HarnessError> {
    config.validate()?;
    let rows = read_csv(csv_path)?;
    let stored = rows.get(row).cloned().ok_or(HarnessError::NoSuchRow { row, rows: rows.len() })?;
    let unknown =
        || HarnessError::UnknownRow { row, instance_id: stored.instance_id.clone(), strategy: stored.strategy.clone() };
    let points = config.points();
    let point = points.iter().find(|p| p.instance_id() == stored.instance_id).ok_or_else(unknown)?;
    let spec = config.strategies.iter().find(|s| s.label() == stored.strategy).ok_or_else(unknown)?;
    let instance = point.instance(config)?;
    let (pc, ac) = config.candidates.sets(&instance.pair, &instance.metric);
    let (reports, seed) = evaluate_strategy(spec, &instance, (&pc, &ac), config.seed, point.index as u64, config.runs)?;
    Ok((stored, summarize(point, spec, seed, &reports)))
}

/// Max mismatch density for one window length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEntry {
    pub length: usize,
    pub max_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub status: AssumptionStatus,
    pub window: usize,
    pub threshold: usize,
    pub mismatches: usize,
    pub densities: Vec<DensityEntry>,
}

/// Assumption verdict plus densities for window lengths `1, 2, 4, ...`
/// and the assumption window itself.
pub fn check(pair: &PredictionPair, params: &AssumptionParams) -> Result<CheckReport, HarnessError> {
    let n = pair.len();
    let mut lengths: Vec<usize> =
        std::iter::successors(Some(1usize), |l| Some(l * 2)).take_while(|l| *l <= n).collect();
    lengths.push(params.window().min(n.max(1)));
    if n > 0 {
        lengths.push(n);
    }
    lengths.sort_unstable();
    lengths.dedup();
    let densities = if n == 0 {
        Vec::new()
    } else {
        lengths
            .into_iter()
            .map(|length| Ok(DensityEntry { length, max_density: pair.max_window_density(length)? }))
            .collect::<Result<_, HarnessError>>()?
    };
    Ok(CheckReport {
        status: pair.check_assumption(params),
        window: params.window(),
        threshold: params.threshold(),
        mismatches: if n == 0 { 0 } else { pair.mismatches(1, n)? },
        densities,
    })
}

/// Online strategies evaluated on the two-branch lower-bound instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub d: f64,
    pub q: f64,
    pub strategy: String,
    pub cost_a: f64,
    pub cost_b: f64,
    pub opt_a: f64,
    pub opt_b: f64,
    pub ratio: f64,
    pub floor: f64,
    pub holds: bool,
}

/// Branch-averaged ratio of each strategy on the lower-bound instance,
/// compared with the floor `1 + q/8`. Deterministic strategies are run on
/// each branch; the coin-flip baseline uses its exact expected cost.
pub fn lowerbound_eval(d: f64, qs: &[f64]) -> Result<Vec<LowerBoundRow>, HarnessError> {
    let metric = Metric::Uniform;
    let mut out = Vec::new();
    for &q in qs {
        let a = lower_bound_instance(d, q, Branch::A)?;
        let b = lower_bound_instance(d, q, Branch::B)?;
        let candidates = vec![Point::Label(0), Point::Label(1)];
        let opt = |pair: &PredictionPair| -> Result<f64, HarnessError> {
            Ok(optimal_schedule(pair.actual(), &metric, d, &candidates, &MoveTimes::All)?.total_cost)
        };
        let (opt_a, opt_b) = (opt(&a)?, opt(&b)?);
        let specs = [
            StrategySpec::Predict,
            StrategySpec::DelayedPredict { delay: None, q: Some(q) },
            StrategySpec::LazyPredict { epsilon: 0.5 },
        ];
        let mut costs: Vec<(String, f64, f64)> = Vec::new();
        for spec in &specs {
            let branch_cost = |pair: &PredictionPair| -> Result<f64, HarnessError> {
                let ctx = StrategyContext {
                    actual: pair.actual(),
                    predicted: pair.predicted(),
                    metric: &metric,
                    d,
                    candidates: &candidates,
                };
                let mut s = spec.build(&ctx, 0)?;
                Ok(run(s.as_mut(), pair.actual(), &metric, d)?.ledger.total())
            };
            let (ca, cb) = (branch_cost(&a)?, branch_cost(&b)?);
            costs.push((spec.label().to_string(), ca, cb));
        }
        costs.push((
            "coinflip".to_string(),
            coinflip_expected_cost(a.actual(), &metric, d),
            coinflip_expected_cost(b.actual(), &metric, d),
        ));
        let floor = 1.0 + q / 8.0;
        for (strategy, cost_a, cost_b) in costs {
            let ratio = 0.5 * (cost_a / opt_a + cost_b / opt_b);
            out.push(LowerBoundRow {
                d,
                q,
                strategy,
                cost_a,
                cost_b,
                opt_a,
                opt_b,
                ratio,
                floor,
                holds: ratio >= floor,
            });
        }
    }
    Ok(out)
}

/// Settings for the suffix-adversary robustness evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustEvalConfig {
    pub n: usize,
    pub d: f64,
    pub qs: Vec<f64>,
    pub epsilon: f64,
    pub runs: usize,
    pub seed: u64,
    /// Regression constant in the `C/q` bound.
    pub constant: f64,
}

impl Default for RobustEvalConfig {
    fn default() -> Self {
        Self { n: 2000, d: 10.0, qs: vec![0.05, 0.1], epsilon: 1.0, runs: 20, seed: 7, constant: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustRow {
    pub q: f64,
    pub opt_cost: f64,
    pub robust_mean: f64,
    pub robust_std: f64,
    pub ratio: f64,
    pub bound: f64,
    pub switch_times: Vec<Option<usize>>,
    pub holds: bool,
}

/// Robust against the offline optimum on `p_0^n` predictions whose actual
/// suffix of length `⌊qn⌋` alternates between two other points.
pub fn robust_eval(config: &RobustEvalConfig) -> Result<Vec<RobustRow>, HarnessError> {
    if config.runs == 0 {
        return Err(config_err("runs", "must be at least 1"));
    }
    let metric = Metric::Uniform;
    config
        .qs
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let tail = floor_count(q * config.n as f64);
            let adversarial = alternating(tail, Point::Label(1), Point::Label(2));
            let pair = suffix_adversary(config.n, q, &adversarial, Point::Label(0))?;
            let candidates = candidate_points(pair.actual(), Some(&metric));
            let instance = Instance { pair, metric: metric.clone(), d: config.d, noise_seed: 0 };
            let c = (&candidates[..], &candidates[..]);
            let (opt, _) = evaluate_strategy(&StrategySpec::Opt, &instance, c, config.seed, i as u64, 1)?;
            let spec = StrategySpec::Robust { q, epsilon: config.epsilon };
            let (reports, _) = evaluate_strategy(&spec, &instance, c, config.seed, i as u64, config.runs)?;
            let totals: Vec<f64> = reports.iter().map(|r| r.ledger.total()).collect();
            let (robust_mean, robust_std) = mean_std(&totals);
            let opt_cost = opt[0].ledger.total();
            let ratio = robust_mean / opt_cost;
            let bound = config.constant / q;
            Ok(RobustRow {
                q,
                opt_cost,
                robust_mean,
                robust_std,
                ratio,
                bound,
                switch_times: reports.iter().map(|r| r.switch_time).collect(),
                holds: ratio <= bound,
            })
        })
        .collect()
}

/// Instance families for the `generate` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateKind {
    Line,
    Brownian,
    Lowerbound,
    Suffix,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateParams {
    pub kind: GenerateKind,
    pub n: usize,
    pub sigma: f64,
    pub q: Option<f64>,
    pub d: Option<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub branch: Branch,
    pub points: usize,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self {
            kind: GenerateKind::Brownian,
            n: 1000,
            sigma: 0.0,
            q: None,
            d: None,
            epsilon: 1.0,
            seed: 0,
            branch: Branch::A,
            points: 8,
        }
    }
}

pub fn generate(params: &GenerateParams) -> Result<(PredictionPair, Metric), HarnessError> {
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| config_err(name, format!("required for {:?}", params.kind)));
    let path_seed = derive_seed(params.seed, 0, PATH_TAG, 0);
    let noise_seed = derive_seed(params.seed, 0, NOISE_TAG, 0);
    Ok(match params.kind {
        GenerateKind::Line | GenerateKind::Brownian => {
            let predicted = if params.kind == GenerateKind::Line {
                line_process(params.n)
            } else {
                brownian_process(params.n, path_seed)
            };
            let actual = gaussian_perturb(&predicted, params.sigma, noise_seed)?;
            (PredictionPair::new(actual, predicted)?, Metric::Euclidean2d)
        }
        GenerateKind::Lowerbound => {
            (lower_bound_instance(need(params.d, "D")?, need(params.q, "q")?, params.branch)?, Metric::Uniform)
        }
        GenerateKind::Suffix => {
            let q = need(params.q, "q")?;
            let tail = floor_count(q * params.n as f64);
            let adversarial = alternating(tail, Point::Label(1), Point::Label(2));
            (suffix_adversary(params.n, q, &adversarial, Point::Label(0))?, Metric::Uniform)
        }
        GenerateKind::Uniform => {
            let d = need(params.d, "D")?;
            let dataset = Dataset::Uniform { points: params.points, switch: 1.0 / d, epsilon: params.epsilon };
            let predicted = dataset.prediction(params.n, path_seed)?;
            let actual = dataset.actual(&predicted, d, params.q.unwrap_or(0.0), noise_seed)?;
            (PredictionPair::new(actual, predicted)?, Metric::Uniform)
        }
    })
}
