//! Synthetic and adversarial instances. Every generator is a pure function
//! of its parameters and seed.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::Point;
use crate::rounding::{floor_count, round_half_up};
use crate::sequences::{AssumptionParams, PredictionPair, RequestSequence, SequenceError};

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("gaussian noise needs planar points, found {0}")]
    NotPlanar(Point),
    #[error("invalid generator parameter {name} = {value}: {reason}")]
    Param { name: &'static str, value: f64, reason: &'static str },
    #[error("adversarial suffix has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("flip pool has no point different from {0}")]
    EmptyPool(Point),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `ŝ_t = (t, 0)` from `p_0 = (0, 0)`.
pub fn line_process(n: usize) -> RequestSequence {
    let items = (1..=n).map(|t| Point::plane(t as f64, 0.0)).collect();
    RequestSequence::new(Point::plane(0.0, 0.0), items)
}

/// Planar random walk with standard normal steps from the origin.
pub fn brownian_process(n: usize, seed: u64) -> RequestSequence {
    let mut rng = rng(seed);
    let (mut x, mut y) = (0.0_f64, 0.0_f64);
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let dx: f64 = rng.sample(rand_distr::StandardNormal);
        let dy: f64 = rng.sample(rand_distr::StandardNormal);
        x += dx;
        y += dy;
        items.push(Point::plane(x, y));
    }
    RequestSequence::new(Point::plane(0.0, 0.0), items)
}

/// Adds i.i.d. `N(0, σ²)` noise to each coordinate of each request.
pub fn gaussian_perturb(predicted: &RequestSequence, sigma: f64, seed: u64) -> Result<RequestSequence, GeneratorError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(GeneratorError::Param { name: "sigma", value: sigma, reason: "must be a finite real >= 0" });
    }
    if let Some(bad) =
        std::iter::once(&predicted.start()).chain(predicted.items()).find(|p| !matches!(p, Point::Plane(_)))
    {
        return Err(GeneratorError::NotPlanar(*bad));
    }
    if sigma == 0.0 {
        return Ok(predicted.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    let mut rng = rng(seed);
    let items = predicted
        .items()
        .iter()
        .map(|p| match p {
            Point::Plane([x, y]) => {
                let nx = normal.sample(&mut rng);
                let ny = normal.sample(&mut rng);
                Point::plane(x + nx, y + ny)
            }
            Point::Label(_) => unreachable!(),
        })
        .collect();
    Ok(RequestSequence::new(predicted.start(), items))
}

/// Where a flipped request lands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlipDistribution {
    /// Uniform over the pool, excluding the predicted point.
    Uniform { pool: Vec<Point> },
    /// Always the same point.
    Far { point: Point },
}

impl FlipDistribution {
    fn draw(&self, predicted: &Point, rng: &mut ChaCha8Rng) -> Result<Point, GeneratorError> {
        match self {
            FlipDistribution::Far { point } => Ok(*point),
            FlipDistribution::Uniform { pool } => {
                let others: Vec<&Point> = pool.iter().filter(|p| *p != predicted).collect();
                if others.is_empty() {
                    return Err(GeneratorError::EmptyPool(*predicted));
                }
                Ok(*others[rng.random_range(0..others.len())])
            }
        }
    }
}

/// Copies `ŝ` and, in every aligned block of `W` requests, replaces
/// `⌊q·W⌋` randomly chosen requests with draws from `flip` (`⌊q·L⌋` in a
/// trailing block of length `L < W`).
///
/// Any window of length `W` overlaps at most two blocks, so the output
/// satisfies the assumption at rate `2q`.
pub fn bounded_flip(
    predicted: &RequestSequence,
    q: f64,
    epsilon: f64,
    d: f64,
    flip: &FlipDistribution,
    seed: u64,
) -> Result<RequestSequence, GeneratorError> {
    let params = AssumptionParams::new(d, q, epsilon)?;
    let (w, per_block) = (params.window(), params.threshold());
    let mut items = predicted.items().to_vec();
    if per_block == 0 {
        return Ok(predicted.clone());
    }
    let mut rng = rng(seed);
    for block_start in (0..items.len()).step_by(w) {
        let block_len = w.min(items.len() - block_start);
        let amount = per_block.min(floor_count(q * block_len as f64));
        let mut chosen = sample(&mut rng, block_len, amount).into_vec();
        chosen.sort_unstable();
        for offset in chosen {
            let i = block_start + offset;
            items[i] = flip.draw(&predicted.items()[i], &mut rng)?;
        }
    }
    Ok(RequestSequence::new(predicted.start(), items))
}

/// Noise applied to a prediction to obtain the actual sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    BoundedFlip { q: f64, epsilon: f64, d: f64, flip: FlipDistribution },
}

impl NoiseModel {
    pub fn apply(&self, predicted: &RequestSequence, seed: u64) -> Result<RequestSequence, GeneratorError> {
        match self {
            NoiseModel::Gaussian { sigma } => gaussian_perturb(predicted, *sigma, seed),
            NoiseModel::BoundedFlip { q, epsilon, d, flip } => bounded_flip(predicted, *q, *epsilon, *d, flip, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    A,
    B,
}

/// Two-point instance on which no online algorithm beats `1 + Ω(q)`.
///
/// `ŝ = 1^{(1-q)D} 0^{2qD}`; branch A has `s = ŝ`, branch B has
/// `s = 1^{(1+q)D}`. Both share the prefix `1^{(1-q)D}`.
pub fn lower_bound_instance(d: f64, q: f64, branch: Branch) -> Result<PredictionPair, GeneratorError> {
    if !(d > 1.0 && d.is_finite()) {
        return Err(GeneratorError::Param { name: "D", value: d, reason: "must be a finite real > 1" });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(GeneratorError::Param { name: "q", value: q, reason: "must lie in (0, 1)" });
    }
    let ones = round_half_up((1.0 - q) * d);
    let zeros = round_half_up(2.0 * q * d);
    if ones == 0 {
        return Err(GeneratorError::Param { name: "(1-q)D", value: (1.0 - q) * d, reason: "rounds to zero" });
    }
    if zeros == 0 {
        return Err(GeneratorError::Param { name: "2qD", value: 2.0 * q * d, reason: "rounds to zero" });
    }
    let (zero, one) = (Point::Label(0), Point::Label(1));
    let mut hat = vec![one; ones];
    hat.extend(std::iter::repeat_n(zero, zeros));
    let actual = match branch {
        Branch::A => hat.clone(),
        Branch::B => vec![one; ones + zeros],
    };
    Ok(PredictionPair::new(RequestSequence::new(zero, actual), RequestSequence::new(zero, hat))?)
}

/// `ŝ = p_0^n` and `s` equal to `ŝ` except for its last `⌊q·n⌋` requests,
/// which are taken from `adversarial`.
pub fn suffix_adversary(
    n: usize,
    q: f64,
    adversarial: &[Point],
    start: Point,
) -> Result<PredictionPair, GeneratorError> {
    if !(0.0..1.0).contains(&q) {
        return Err(GeneratorError::Param { name: "q", value: q, reason: "must lie in [0, 1)" });
    }
    let tail = floor_count(q * n as f64);
    if adversarial.len() != tail {
        return Err(GeneratorError::Shape { got: adversarial.len(), expected: tail });
    }
    let hat = vec![start; n];
    let mut actual = hat.clone();
    actual[n - tail..].copy_from_slice(adversarial);
    Ok(PredictionPair::new(RequestSequence::new(start, actual), RequestSequence::new(start, hat))?)
}

/// `len` points alternating `a, b, a, b, ...`.
pub fn alternating(len: usize, a: Point, b: Point) -> Vec<Point> {
    (0..len).map(|i| if i % 2 == 0 { a } else { b }).collect()
}

/// Requests that linger at a pool point and, with probability `switch`
/// per step, jump to a uniformly chosen different pool point. The walk
/// starts at `pool[0]`, which is also `p_0`.
pub fn sticky_walk(n: usize, pool: &[Point], switch: f64, seed: u64) -> Result<RequestSequence, GeneratorError> {
    if !(0.0..=1.0).contains(&switch) {
        return Err(GeneratorError::Param { name: "switch", value: switch, reason: "must lie in [0, 1]" });
    }
    if pool.len() < 2 {
        return Err(GeneratorError::Param {
            name: "pool size",
            value: pool.len() as f64,
            reason: "needs at least 2 points",
        });
    }
    let mut rng = rng(seed);
    let mut current = 0usize;
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random_bool(switch) {
            let j = rng.random_range(0..pool.len() - 1);
            current = if j >= current { j + 1 } else { j };
        }
        items.push(pool[current]);
    }
    Ok(RequestSequence::new(pool[0], items))
}

/// `k` points drawn uniformly from the square `[0, side]²`.
pub fn planar_cloud(k: usize, side: f64, seed: u64) -> Vec<Point> {
    let mut rng = rng(seed);
    (0..k).map(|_| Point::plane(rng.random_range(0.0..side), rng.random_range(0.0..side))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;
    use crate::solver::{candidate_points, optimal_schedule, MoveTimes};

    #[test]
    fn line_process_examples() {
        assert!(line_process(0).is_empty());
        let s = line_process(3);
        assert_eq!(s.items(), &[Point::plane(1.0, 0.0), Point::plane(2.0, 0.0), Point::plane(3.0, 0.0)]);
        assert_eq!(s.start(), Point::plane(0.0, 0.0));
    }

    #[test]
    fn brownian_is_seeded() {
        assert_eq!(brownian_process(50, 3), brownian_process(50, 3));
        assert_ne!(brownian_process(50, 3), brownian_process(50, 4));
    }

    #[test]
    fn perturb_rejects_labels_and_keeps_sigma_zero() {
        let s = RequestSequence::new(Point::Label(0), vec![Point::Label(1)]);
        assert_eq!(gaussian_perturb(&s, 1.0, 0), Err(GeneratorError::NotPlanar(Point::Label(0))));
        let b = brownian_process(20, 1);
        assert_eq!(gaussian_perturb(&b, 0.0, 9).unwrap(), b);
        assert!(gaussian_perturb(&b, -1.0, 9).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let a = lower_bound_instance(100.0, 0.1, Branch::A).unwrap();
        let hat = a.predicted().items();
        assert_eq!(hat.len(), 110);
        assert!(hat[..90].iter().all(|p| *p == Point::Label(1)));
        assert!(hat[90..].iter().all(|p| *p == Point::Label(0)));
        assert_eq!(a.actual(), a.predicted());
        let b = lower_bound_instance(100.0, 0.1, Branch::B).unwrap();
        assert!(b.actual().items().iter().all(|p| *p == Point::Label(1)));
        assert_eq!(b.actual().len(), 110);
        assert_eq!(&b.actual().items()[..90], &hat[..90]);

        let c = candidate_points(a.actual(), Some(&Metric::Uniform));
        let oa = optimal_schedule(a.actual(), &Metric::Uniform, 100.0, &c, &MoveTimes::All).unwrap();
        assert_eq!(oa.total_cost, 90.0);
        assert!(oa.schedule.move_times().is_empty());
        let ob = optimal_schedule(b.actual(), &Metric::Uniform, 100.0, &c, &MoveTimes::All).unwrap();
        assert!(ob.total_cost <= 100.0);
        assert_eq!(ob.schedule.move_times(), vec![1]);

        assert!(matches!(lower_bound_instance(2.0, 0.1, Branch::A), Err(GeneratorError::Param { .. })));
    }

    #[test]
    fn suffix_examples() {
        let p0 = Point::Label(0);
        let pair = suffix_adversary(50, 0.0, &[], p0).unwrap();
        assert_eq!(pair.actual(), pair.predicted());
        let adv = alternating(10, Point::Label(1), Point::Label(2));
        let pair = suffix_adversary(100, 0.1, &adv, p0).unwrap();
        let flipped: Vec<usize> = (1..=100).filter(|&t| pair.is_mismatch(t)).collect();
        assert_eq!(flipped, (91..=100).collect::<Vec<_>>());
        assert_eq!(
            suffix_adversary(100, 0.1, &adv[..3], p0).unwrap_err(),
            GeneratorError::Shape { got: 3, expected: 10 }
        );
    }

    #[test]
    fn bounded_flip_with_zero_budget_is_identity() {
        let hat = sticky_walk(100, &[Point::Label(0), Point::Label(1)], 0.1, 5).unwrap();
        let flip = FlipDistribution::Far { point: Point::Label(9) };
        assert_eq!(bounded_flip(&hat, 0.05, 1.0, 10.0, &flip, 1).unwrap(), hat);
    }

    #[test]
    fn sticky_walk_switches_to_other_points() {
        let pool: Vec<Point> = (0..3).map(Point::Label).collect();
        let s = sticky_walk(200, &pool, 1.0, 2).unwrap();
        let mut prev = s.start();
        for p in s.items() {
            assert_ne!(*p, prev);
            prev = *p;
        }
        let s = sticky_walk(50, &pool, 0.0, 2).unwrap();
        assert!(s.items().iter().all(|p| *p == pool[0]));
    }
}
