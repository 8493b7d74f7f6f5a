//! Benchmark protocols: keyframe F-score against annotator summaries and
//! crop-window IoU against annotator windows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crop::{CropTraceEntry, CropWindow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read annotations: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed annotations: {0}")]
    Parse(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("machine output has {machine} frames, annotations have {annotated}")]
    FrameCountMismatch { machine: usize, annotated: usize },
    #[error("annotation set is empty")]
    NoAnnotators,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `machine` frames against `user` frames. A
/// zero denominator makes the affected quantity zero.
pub fn fscore(machine: &[bool], user: &[bool]) -> Result<Prf, EvalError> {
    if machine.len() != user.len() {
        return Err(EvalError::LengthMismatch {
            left: machine.len(),
            right: user.len(),
        });
    }
    let m = machine.iter().filter(|&&b| b).count() as f64;
    let u = user.iter().filter(|&&b| b).count() as f64;
    let both = machine.iter().zip(user).filter(|(a, b)| **a && **b).count() as f64;
    let precision = if m > 0.0 { both / m } else { 0.0 };
    let recall = if u > 0.0 { both / u } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

/// How per-annotator F-scores combine into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Best-matching annotator (SumMe convention).
    Max,
    /// Average over annotators (TVSum convention).
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Aggregation::Max),
            "mean" | "avg" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation {other:?}, expected max or mean")),
        }
    }
}

/// Binary per-frame summaries from one or more annotators.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSummarySet {
    users: Vec<Vec<bool>>,
}

impl UserSummarySet {
    pub fn new(users: Vec<Vec<bool>>) -> Result<Self, EvalError> {
        let first = users.first().ok_or(EvalError::NoAnnotators)?.len();
        if let Some(bad) = users.iter().find(|u| u.len() != first) {
            return Err(EvalError::LengthMismatch {
                left: first,
                right: bad.len(),
            });
        }
        Ok(Self { users })
    }

    pub fn frame_count(&self) -> usize {
        self.users[0].len()
    }

    pub fn users(&self) -> &[Vec<bool>] {
        &self.users
    }
}

/// Per-annotator F1 combined by `mode`.
pub fn fscore_protocol(machine: &[bool], users: &UserSummarySet, mode: Aggregation) -> Result<f64, EvalError> {
    let scores = users
        .users
        .iter()
        .map(|u| fscore(machine, u).map(|p| p.f1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&scores, mode))
}

/// Combines per-annotator scores. `scores` must be non-empty.
pub fn aggregate(scores: &[f64], mode: Aggregation) -> f64 {
    match mode {
        Aggregation::Max => scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    }
}

/// Intersection over union of two windows.
pub fn iou(a: &CropWindow, b: &CropWindow) -> f64 {
    let x0 = a.x.max(b.x) as u64;
    let y0 = a.y.max(b.y) as u64;
    let x1 = (a.x as u64 + a.w as u64).min(b.x as u64 + b.w as u64);
    let y1 = (a.y as u64 + a.h as u64).min(b.y as u64 + b.h as u64);
    let inter = x1.saturating_sub(x0) * y1.saturating_sub(y0);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Ground-truth windows: `frames[f][a]` is annotator `a`'s window on frame
/// `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CropAnnotationSet {
    frames: Vec<Vec<CropWindow>>,
    annotators: usize,
}

impl CropAnnotationSet {
    pub fn new(frames: Vec<Vec<CropWindow>>) -> Result<Self, EvalError> {
        let annotators = frames.first().map_or(0, Vec::len);
        if annotators == 0 {
            return Err(EvalError::NoAnnotators);
        }
        if let Some(bad) = frames.iter().find(|f| f.len() != annotators) {
            return Err(EvalError::LengthMismatch {
                left: annotators,
                right: bad.len(),
            });
        }
        Ok(Self { frames, annotators })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn annotators(&self) -> usize {
        self.annotators
    }
}

/// Worst, best and mean over annotators of the per-annotator mean IoU, in
/// percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub worst: f64,
    pub best: f64,
    pub mean: f64,
}

pub fn iou_report(machine: &[CropWindow], annotations: &CropAnnotationSet) -> Result<IouReport, EvalError> {
    if machine.len() != annotations.frame_count() {
        return Err(EvalError::FrameCountMismatch {
            machine: machine.len(),
            annotated: annotations.frame_count(),
        });
    }
    if machine.is_empty() {
        return Err(EvalError::FrameCountMismatch { machine: 0, annotated: 0 });
    }
    let n = machine.len() as f64;
    let per_annotator: Vec<f64> = (0..annotations.annotators)
        .map(|a| {
            machine
                .iter()
                .zip(&annotations.frames)
                .map(|(m, gt)| iou(m, &gt[a]))
                .sum::<f64>()
                / n
                * 100.0
        })
        .collect();
    let worst = per_annotator.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = per_annotator.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = per_annotator.iter().sum::<f64>() / per_annotator.len() as f64;
    // the mean of values within [worst, best] can round outside by an ulp
    let mean = mean.clamp(worst, best);
    Ok(IouReport { worst, best, mean })
}

#[derive(Deserialize)]
struct SummaryAnnotationsDoc {
    frame_count: usize,
    users: Vec<UserDoc>,
}

#[derive(Deserialize)]
struct UserDoc {
    summary: Vec<u8>,
}

/// Parses `{frame_count, users: [{summary: [0/1, ...]}, ...]}`.
pub fn parse_summary_annotations(text: &str) -> Result<UserSummarySet, EvalError> {
    let doc: SummaryAnnotationsDoc =
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    let users = doc
        .users
        .into_iter()
        .map(|u| {
            if u.summary.len() != doc.frame_count {
                return Err(EvalError::LengthMismatch {
                    left: doc.frame_count,
                    right: u.summary.len(),
                });
            }
            u.summary
                .into_iter()
                .map(|b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(EvalError::Parse(format!("summary entry {other} is not 0 or 1"))),
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<bool>>, _>>()?;
    UserSummarySet::new(users)
}

pub fn load_summary_annotations(path: &Path) -> Result<UserSummarySet, EvalError> {
    parse_summary_annotations(&fs::read_to_string(path)?)
}

#[derive(Deserialize)]
struct CropAnnotationsDoc {
    frames: Vec<FrameDoc>,
}

#[derive(Deserialize)]
struct FrameDoc {
    user_windows: Vec<[u32; 4]>,
}

/// Parses `{frames: [{user_windows: [[x,y,w,h], ...]}, ...]}`.
pub fn parse_crop_annotations(text: &str) -> Result<CropAnnotationSet, EvalError> {
    let doc: CropAnnotationsDoc =
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    let frames = doc
        .frames
        .into_iter()
        .map(|f| {
            f.user_windows
                .into_iter()
                .map(|[x, y, w, h]| CropWindow { x, y, w, h })
                .collect()
        })
        .collect();
    CropAnnotationSet::new(frames)
}

pub fn load_crop_annotations(path: &Path) -> Result<CropAnnotationSet, EvalError> {
    parse_crop_annotations(&fs::read_to_string(path)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FragmentRange {
    Pair(u64, u64),
    Doc { start_frame: u64, end_frame: u64 },
}

/// Reads machine summary frames: either a JSON array of 0/1 flags, or an
/// object with `fragments` (inclusive `[start, end]` pairs or
/// `{start_frame, end_frame, ...}` objects, as in a result document)
/// expanded over `frame_count` frames.
pub fn parse_machine_summary(text: &str, frame_count: usize) -> Result<Vec<bool>, EvalError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    if let Some(arr) = value.as_array() {
        return arr
            .iter()
            .map(|v| match v.as_u64() {
                Some(0) => Ok(false),
                Some(1) => Ok(true),
                _ => Err(EvalError::Parse(format!("summary entry {v} is not 0 or 1"))),
            })
            .collect();
    }
    let frags: Vec<FragmentRange> = value
        .get("fragments")
        .cloned()
        .ok_or_else(|| EvalError::Parse("expected an array or an object with fragments".into()))
        .and_then(|f| serde_json::from_value(f).map_err(|e| EvalError::Parse(e.to_string())))?;
    let mut flags = vec![false; frame_count];
    for f in frags {
        let (s, e) = match f {
            FragmentRange::Pair(s, e) => (s, e),
            FragmentRange::Doc { start_frame, end_frame } => (start_frame, end_frame),
        };
        if s > e || e as usize >= frame_count {
            return Err(EvalError::Parse(format!("fragment ({s},{e}) outside {frame_count} frames")));
        }
        flags[s as usize..=e as usize].iter_mut().for_each(|f| *f = true);
    }
    Ok(flags)
}

/// Reads a crop trace (`[{frame,x,y,w,h}, ...]`, bare or as the
/// `crop_trace` field of a result document) as windows ordered by frame.
pub fn parse_crop_trace(text: &str) -> Result<Vec<CropWindow>, EvalError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    if let Some(trace) = value.get_mut("crop_trace") {
        value = trace.take();
    }
    let mut rows: Vec<CropTraceEntry> = serde_json::from_value(value).map_err(|e| EvalError::Parse(e.to_string()))?;
    rows.sort_by_key(|r| r.frame);
    Ok(rows.iter().map(CropTraceEntry::window).collect())
}

/// One line of an F-score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FscoreRow {
    pub video: String,
    pub mode: Aggregation,
    pub precision: f64,
    pub recall: f64,
    /// Percent.
    pub f_score: f64,
}

/// Formats F-score rows as a plain-text table with one decimal.
pub fn fscore_table(rows: &[FscoreRow]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|r| r.video.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(out, "{:<width$}  {:>4}  {:>12}", "video", "mode", "F-Score (%)");
    for r in rows {
        let mode = match r.mode {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        };
        let _ = writeln!(out, "{:<width$}  {:>4}  {:>12.1}", r.video, mode, r.f_score);
    }
    if rows.len() > 1 {
        let avg = rows.iter().map(|r| r.f_score).sum::<f64>() / rows.len() as f64;
        let _ = writeln!(out, "{:<width$}  {:>4}  {:>12.1}", "average", "", avg);
    }
    out
}

/// Formats IoU reports as a Worst/Best/Mean table with one decimal.
pub fn iou_table(rows: &[(String, IouReport)]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "video", "Worst", "Best", "Mean");
    for (name, r) in rows {
        let _ = writeln!(out, "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1}", name, r.worst, r.best, r.mean);
    }
    out
}
