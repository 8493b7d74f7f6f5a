//! Per-frame importance in `[0, 1]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::Frame;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot read score file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed score file: {0}")]
    Parse(String),
    #[error("expected {expected} scores, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("score {value} at frame {index} is outside [0, 1]")]
    Range { index: usize, value: f64 },
}

/// One importance value per frame of the source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ImportanceSeries(Vec<f64>);

impl ImportanceSeries {
    pub fn new(scores: Vec<f64>) -> Result<Self, ScoreError> {
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ScoreError::Range { index, value });
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ImportanceSeries {
    type Error = ScoreError;

    fn try_from(v: Vec<f64>) -> Result<Self, ScoreError> {
        Self::new(v)
    }
}

impl From<ImportanceSeries> for Vec<f64> {
    fn from(s: ImportanceSeries) -> Vec<f64> {
        s.0
    }
}

/// Reads per-frame scores: a JSON array when the first non-blank byte is
/// `[`, otherwise one number per line.
pub fn import_scores(path: &Path, frame_count: u64) -> Result<ImportanceSeries, ScoreError> {
    parse_scores(&fs::read_to_string(path)?, frame_count)
}

pub fn parse_scores(text: &str, frame_count: u64) -> Result<ImportanceSeries, ScoreError> {
    let values: Vec<f64> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| ScoreError::Parse(e.to_string()))?
    } else {
        text.lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(n, l)| {
                l.parse::<f64>()
                    .map_err(|e| ScoreError::Parse(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_, _>>()?
    };
    if values.len() as u64 != frame_count {
        return Err(ScoreError::LengthMismatch {
            expected: frame_count,
            found: values.len() as u64,
        });
    }
    ImportanceSeries::new(values)
}

/// Min-max normalizes to `[0, 1]`; an all-equal (or empty) input maps to
/// zeros.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if raw.is_empty() || hi <= lo {
        return vec![0.0; raw.len()];
    }
    let span = hi - lo;
    raw.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Streaming motion-magnitude scorer: mean absolute luma difference to the
/// previous frame.
#[derive(Debug, Default)]
pub struct MotionScorer {
    prev: Option<Vec<f32>>,
    raw: Vec<f64>,
}

impl MotionScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: &Frame) {
        self.push_luma(frame.luma());
    }

    pub fn push_luma(&mut self, luma: Vec<f32>) {
        if let Some(prev) = &self.prev {
            let n = luma.len().max(1) as f64;
            let sum: f64 = prev.iter().zip(&luma).map(|(a, b)| (a - b).abs() as f64).sum();
            self.raw.push(sum / n);
        }
        self.prev = Some(luma);
    }

    /// Raw (unnormalized) per-frame motion; frame 0 copies frame 1.
    pub fn raw(&self) -> Vec<f64> {
        match self.raw.first() {
            None if self.prev.is_some() => vec![0.0],
            None => Vec::new(),
            Some(&first) => std::iter::once(first).chain(self.raw.iter().copied()).collect(),
        }
    }

    pub fn finish(&self) -> ImportanceSeries {
        ImportanceSeries(min_max_normalize(&self.raw()))
    }
}

/// Motion-magnitude fallback when no model scores are supplied.
pub fn baseline_scores<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> ImportanceSeries {
    let mut scorer = MotionScorer::new();
    for f in frames {
        scorer.push(f);
    }
    scorer.finish()
}
