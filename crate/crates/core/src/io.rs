//! Sequence files.
//!
//! A prediction pair is stored as three files: a JSON header with `p_0`,
//! the metric and the length, and two JSON-lines files (predicted and
//! actual) holding one `{"t": i, "point": ...}` object per request.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{Metric, MetricError, Point};
use crate::sequences::{PredictionPair, RequestSequence, SequenceError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Format { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceHeader {
    pub start: Point,
    pub metric: Metric,
    pub len: usize,
}

#[derive(Serialize, Deserialize)]
struct Line {
    t: usize,
    point: Point,
}

/// Paths of the three files making up a stored pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairFiles {
    pub header: PathBuf,
    pub predicted: PathBuf,
    pub actual: PathBuf,
}

impl PairFiles {
    /// `<stem>.header.json`, `<stem>.predicted.jsonl`, `<stem>.actual.jsonl`.
    pub fn from_stem(stem: impl AsRef<Path>) -> Self {
        let stem = stem.as_ref().to_string_lossy().into_owned();
        Self {
            header: PathBuf::from(format!("{stem}.header.json")),
            predicted: PathBuf::from(format!("{stem}.predicted.jsonl")),
            actual: PathBuf::from(format!("{stem}.actual.jsonl")),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_requests(path: &Path, items: &[Point]) -> Result<(), IoError> {
    let mut out = create(path)?;
    for (i, point) in items.iter().enumerate() {
        let line = serde_json::to_string(&Line { t: i + 1, point: *point }).expect("points serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads request lines; `t` must run 1, 2, ... without gaps. Blank lines
/// are skipped.
pub fn read_requests(path: &Path) -> Result<Vec<Point>, IoError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let format = |reason: String| IoError::Format { path: path.to_path_buf(), line: i + 1, reason };
        let parsed: Line = serde_json::from_str(&line).map_err(|e| format(e.to_string()))?;
        if parsed.t != items.len() + 1 {
            return Err(format(format!("expected t = {}, found {}", items.len() + 1, parsed.t)));
        }
        items.push(parsed.point);
    }
    Ok(items)
}

pub fn write_header(path: &Path, header: &SequenceHeader) -> Result<(), IoError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, header).expect("headers serialize");
    writeln!(out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_header(path: &Path) -> Result<SequenceHeader, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Reads one request file against a header, checking length and points.
pub fn read_sequence(header: &SequenceHeader, path: &Path) -> Result<RequestSequence, IoError> {
    let items = read_requests(path)?;
    if items.len() != header.len {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            line: items.len(),
            reason: format!("header declares {} requests, file has {}", header.len, items.len()),
        });
    }
    let seq = RequestSequence::new(header.start, items);
    seq.validate(&header.metric)?;
    Ok(seq)
}

pub fn write_pair(files: &PairFiles, pair: &PredictionPair, metric: &Metric) -> Result<(), IoError> {
    let header = SequenceHeader { start: pair.actual().start(), metric: metric.clone(), len: pair.len() };
    write_header(&files.header, &header)?;
    write_requests(&files.predicted, pair.predicted().items())?;
    write_requests(&files.actual, pair.actual().items())
}

pub fn read_pair(files: &PairFiles) -> Result<(SequenceHeader, PredictionPair), IoError> {
    let header = read_header(&files.header)?;
    let predicted = read_sequence(&header, &files.predicted)?;
    let actual = read_sequence(&header, &files.actual)?;
    let pair = PredictionPair::new(actual, predicted)?;
    Ok((header, pair))
}
