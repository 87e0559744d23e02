//! Points and distance functions for the metric families the simulator
//! supports: the uniform metric, the Euclidean plane, and explicit finite
//! metrics given by a distance matrix.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for every cost and distance comparison.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("point {point} is not valid for the {kind} metric")]
    InvalidPoint { point: Point, kind: &'static str },
    #[error("distance matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("distance matrix declares {declared} points but has {rows} rows")]
    PointCount { declared: usize, rows: usize },
    #[error("metric axiom violated: {0}")]
    Violation(AxiomViolation),
    #[error("failed to read metric file: {0}")]
    Io(String),
}

/// A location in a metric space.
///
/// Uniform and explicit metrics address points by a dense integer label;
/// the Euclidean plane uses coordinates. Equality is bitwise on the
/// coordinates (with `-0.0` folded onto `0.0`), which keeps `Eq` and `Hash`
/// consistent so points can be deduplicated in hash sets.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Label(usize),
    Plane([f64; 2]),
}

impl Point {
    pub fn plane(x: f64, y: f64) -> Self {
        Point::Plane([x, y])
    }

    fn key(&self) -> (u8, u64, u64) {
        match *self {
            Point::Label(l) => (0, l as u64, 0),
            Point::Plane([x, y]) => (1, (x + 0.0).to_bits(), (y + 0.0).to_bits()),
        }
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Label(l) => write!(f, "#{l}"),
            Point::Plane([x, y]) => write!(f, "({x}, {y})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    Identity,
    Positivity,
    Symmetry,
    Triangle,
}

/// First violated axiom of an explicit matrix and the indices witnessing it.
/// For the triangle inequality the witness is `(i, j, k)` with
/// `d(i,k) > d(i,j) + d(j,k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub witness: Vec<usize>,
}

impl fmt::Display for AxiomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {:?}", self.axiom, self.witness)
    }
}

/// Finite metric over labels `0..k`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplicitMetric {
    points: usize,
    #[serde(serialize_with = "serialize_rows")]
    matrix: Vec<f64>,
}

fn serialize_rows<S: serde::Serializer>(flat: &[f64], ser: S) -> Result<S::Ok, S::Error> {
    let k = (flat.len() as f64).sqrt().round() as usize;
    let rows: Vec<&[f64]> = if k == 0 { Vec::new() } else { flat.chunks(k).collect() };
    rows.serialize(ser)
}

#[derive(Deserialize)]
struct RawExplicit {
    points: usize,
    matrix: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for ExplicitMetric {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = RawExplicit::deserialize(de)?;
        if raw.points != raw.matrix.len() {
            return Err(serde::de::Error::custom(MetricError::PointCount {
                declared: raw.points,
                rows: raw.matrix.len(),
            }));
        }
        ExplicitMetric::new(raw.matrix).map_err(serde::de::Error::custom)
    }
}

impl ExplicitMetric {
    /// Builds a metric from a square matrix, rejecting anything that fails
    /// [`validate_explicit`].
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        validate_explicit(&matrix)?;
        let points = matrix.len();
        Ok(Self { points, matrix: matrix.into_iter().flatten().collect() })
    }

    /// Symmetrizes an arbitrary square matrix of nonnegative weights and
    /// closes it under shortest paths, which always yields a valid metric.
    /// Off-diagonal entries are floored at `min_distance` to keep distinct
    /// points at positive distance.
    pub fn repaired(raw: &[Vec<f64>], min_distance: f64) -> Result<Self, MetricError> {
        let k = raw.len();
        check_square(raw)?;
        let mut m = vec![0.0; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let w = ((raw[i][j].abs() + raw[j][i].abs()) / 2.0).max(min_distance);
                m[i * k + j] = w;
                m[j * k + i] = w;
            }
        }
        for via in 0..k {
            for i in 0..k {
                for j in (i + 1)..k {
                    let alt = m[i * k + via] + m[via * k + j];
                    if alt < m[i * k + j] {
                        m[i * k + j] = alt;
                        m[j * k + i] = alt;
                    }
                }
            }
        }
        Ok(Self { points: k, matrix: m })
    }

    /// Loads `{"points": k, "matrix": [[...]]}` from a JSON file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| MetricError::Io(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.points + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.points.max(1)).map(|r| r.to_vec()).collect()
    }
}

/// The metric spaces pages and requests live in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    /// Every pair of distinct labels is at distance one.
    Uniform,
    Euclidean2d,
    Explicit(ExplicitMetric),
}

impl Metric {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Metric::Uniform => "uniform",
            Metric::Euclidean2d => "euclidean2d",
            Metric::Explicit(_) => "explicit",
        }
    }

    pub fn validate_point(&self, p: &Point) -> Result<(), MetricError> {
        let ok = match (self, p) {
            (Metric::Uniform, Point::Label(_)) => true,
            (Metric::Explicit(m), Point::Label(l)) => *l < m.len(),
            (Metric::Euclidean2d, Point::Plane([x, y])) => x.is_finite() && y.is_finite(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(MetricError::InvalidPoint { point: *p, kind: self.kind_name() })
        }
    }

    /// Distance between two points, validating both.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64, MetricError> {
        self.validate_point(p)?;
        self.validate_point(q)?;
        Ok(self.dist(p, q))
    }

    /// Distance between two points already known to be valid for this
    /// metric. Mismatched point kinds yield NaN.
    #[inline]
    pub(crate) fn dist(&self, p: &Point, q: &Point) -> f64 {
        match (self, p, q) {
            (Metric::Uniform, Point::Label(a), Point::Label(b)) => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            (Metric::Euclidean2d, Point::Plane([x1, y1]), Point::Plane([x2, y2])) => {
                let dx = x1 - x2;
                let dy = y1 - y2;
                (dx * dx + dy * dy).sqrt()
            }
            (Metric::Explicit(m), Point::Label(a), Point::Label(b)) => m.get(*a, *b),
            _ => f64::NAN,
        }
    }

    /// All points of a finite metric, `None` for unbounded ones.
    pub fn all_points(&self) -> Option<Vec<Point>> {
        match self {
            Metric::Explicit(m) => Some((0..m.len()).map(Point::Label).collect()),
            _ => None,
        }
    }
}

fn check_square(matrix: &[Vec<f64>]) -> Result<(), MetricError> {
    let k = matrix.len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != k {
            return Err(MetricError::NotSquare { row, len: r.len(), expected: k });
        }
    }
    Ok(())
}

/// Checks the metric axioms on a square matrix in the order identity,
/// positivity, symmetry, triangle inequality, and reports the first
/// violation found. Triangle checks allow [`TOLERANCE`] of slack.
pub fn validate_explicit(matrix: &[Vec<f64>]) -> Result<(), MetricError> {
    check_square(matrix)?;
    let k = matrix.len();
    let violation = |axiom, witness: Vec<usize>| Err(MetricError::Violation(AxiomViolation { axiom, witness }));
    for i in 0..k {
        if matrix[i][i] != 0.0 {
            return violation(Axiom::Identity, vec![i]);
        }
    }
    for i in 0..k {
        for j in 0..k {
            if i != j && !(matrix[i][j] > 0.0 && matrix[i][j].is_finite()) {
                return violation(Axiom::Positivity, vec![i, j]);
            }
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if matrix[i][j] != matrix[j][i] {
                return violation(Axiom::Symmetry, vec![i, j]);
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                if matrix[i][l] > matrix[i][j] + matrix[j][l] + TOLERANCE {
                    return violation(Axiom::Triangle, vec![i, j, l]);
                }
            }
        }
    }
    Ok(())
}
