#![allow(dead_code)]

use pagemig::metric::{ExplicitMetric, Metric, Point};
use pagemig::sequences::RequestSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub enum Family {
    Uniform,
    Explicit,
    /// Integer grid points in the plane.
    Snapped,
}

pub const FAMILIES: [Family; 3] = [Family::Uniform, Family::Explicit, Family::Snapped];

/// A metric and `k` points of it.
pub fn random_space(rng: &mut ChaCha8Rng, family: Family, k: usize) -> (Metric, Vec<Point>) {
    match family {
        Family::Uniform => (Metric::Uniform, (0..k).map(Point::Label).collect()),
        Family::Explicit => {
            let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0.5..10.0)).collect()).collect();
            let m = ExplicitMetric::repaired(&raw, 0.1).unwrap();
            (Metric::Explicit(m), (0..k).map(Point::Label).collect())
        }
        Family::Snapped => {
            let mut pts: Vec<Point> = Vec::new();
            while pts.len() < k {
                let p = Point::plane(rng.random_range(-4..=4) as f64, rng.random_range(-4..=4) as f64);
                if !pts.contains(&p) {
                    pts.push(p);
                }
            }
            (Metric::Euclidean2d, pts)
        }
    }
}

/// `n` requests drawn uniformly from `points`, starting at `points[0]`.
pub fn random_sequence(rng: &mut ChaCha8Rng, points: &[Point], n: usize) -> RequestSequence {
    let items = (0..n).map(|_| points[rng.random_range(0..points.len())]).collect();
    RequestSequence::new(points[0], items)
}

pub fn dist(metric: &Metric, a: &Point, b: &Point) -> f64 {
    metric.distance(a, b).unwrap()
}

/// Cost of a position list, accumulated `(acc + move) + serve` per step.
pub fn schedule_cost(positions: &[Point], seq: &RequestSequence, metric: &Metric, d: f64) -> f64 {
    let mut acc = 0.0;
    for t in 1..=seq.len() {
        acc = acc + d * dist(metric, &positions[t - 1], &positions[t]) + dist(metric, &positions[t], &seq.at(t));
    }
    acc
}

/// Minimum over every schedule on `candidates` by odometer enumeration.
pub fn exhaustive_min(seq: &RequestSequence, metric: &Metric, d: f64, candidates: &[Point]) -> f64 {
    let (n, k) = (seq.len(), candidates.len());
    let mut digits = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut positions = vec![seq.start()];
        positions.extend(digits.iter().map(|&i| candidates[i]));
        best = best.min(schedule_cost(&positions, seq, metric, d));
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            digits[i] += 1;
            if digits[i] < k {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Naive mismatch count over `[i, j]`.
pub fn naive_mismatches(actual: &RequestSequence, predicted: &RequestSequence, i: usize, j: usize) -> usize {
    (i..=j).filter(|&t| actual.at(t) != predicted.at(t)).count()
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
