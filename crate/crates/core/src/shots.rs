//! Temporal partition of a video into shots.
//!
//! Shots either come from an external detector (JSON `[[start,end],...]`,
//! inclusive) or from the built-in hard-cut detector: chi-square distance
//! between 64-bin luma histograms of consecutive frames, thresholded at
//! `mean + sensitivity * std` of that distance over the whole video.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::Frame;

pub const HISTOGRAM_BINS: usize = 64;
pub const DEFAULT_SENSITIVITY: f64 = 3.0;
pub const DEFAULT_MIN_SHOT_LEN: u64 = 10;

/// A run of frames, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub index: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl Shot {
    pub fn num_frames(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

#[derive(Debug, Error)]
pub enum ShotError {
    #[error("cannot read shot file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed shot file: {0}")]
    Parse(String),
    #[error("shots do not partition the video: {0}")]
    Partition(String),
}

/// Checks that `ranges` tile `[0, frame_count-1]` exactly, in order.
pub fn validate_partition(ranges: &[(u64, u64)], frame_count: u64) -> Result<(), ShotError> {
    if frame_count == 0 {
        return Err(ShotError::Partition("video has no frames".into()));
    }
    let mut expected = 0u64;
    for (i, &(s, e)) in ranges.iter().enumerate() {
        if s > e {
            return Err(ShotError::Partition(format!("shot {i} ends before it starts")));
        }
        if e >= frame_count {
            return Err(ShotError::Partition(format!(
                "shot {i} ends at {e}, beyond the last frame {}",
                frame_count - 1
            )));
        }
        if s > expected {
            return Err(ShotError::Partition(format!("gap before shot {i} ({expected}..{s})")));
        }
        if s < expected {
            return Err(ShotError::Partition(format!("shot {i} overlaps its predecessor")));
        }
        expected = e + 1;
    }
    if expected != frame_count {
        return Err(ShotError::Partition(format!(
            "shots cover {expected} of {frame_count} frames"
        )));
    }
    Ok(())
}

/// Builds shots from sorted cut positions (first frame of each new shot).
pub fn shots_from_boundaries(boundaries: &[u64], frame_count: u64) -> Vec<Shot> {
    let mut starts = vec![0u64];
    starts.extend(boundaries.iter().copied().filter(|&b| b > 0 && b < frame_count));
    starts.dedup();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| Shot {
            index: i,
            start_frame: s,
            end_frame: starts.get(i + 1).map_or(frame_count - 1, |n| n - 1),
        })
        .collect()
}

/// Reads a JSON array of inclusive `[start, end]` pairs and checks it
/// against `frame_count`.
pub fn import_shots(path: &Path, frame_count: u64) -> Result<Vec<Shot>, ShotError> {
    let text = fs::read_to_string(path)?;
    parse_shots(&text, frame_count)
}

pub fn parse_shots(text: &str, frame_count: u64) -> Result<Vec<Shot>, ShotError> {
    let ranges: Vec<(u64, u64)> =
        serde_json::from_str(text).map_err(|e| ShotError::Parse(e.to_string()))?;
    validate_partition(&ranges, frame_count)?;
    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(index, (start_frame, end_frame))| Shot {
            index,
            start_frame,
            end_frame,
        })
        .collect())
}

/// Normalized 64-bin histogram of BT.601 luma.
pub fn luma_histogram(frame: &Frame) -> [f64; HISTOGRAM_BINS] {
    let mut counts = [0u64; HISTOGRAM_BINS];
    for p in frame.pixels.chunks_exact(3) {
        let y = (299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32) / 1000;
        counts[(y as usize * HISTOGRAM_BINS) / 256] += 1;
    }
    let n = (frame.pixels.len() / 3).max(1) as f64;
    counts.map(|c| c as f64 / n)
}

/// Chi-square distance between two normalized histograms, in `[0, 2]`.
pub fn chi_square(a: &[f64; HISTOGRAM_BINS], b: &[f64; HISTOGRAM_BINS]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0.0)
        .map(|(x, y)| (x - y) * (x - y) / (x + y))
        .sum()
}

/// Detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotParams {
    pub min_shot_len: u64,
    pub sensitivity: f64,
}

impl Default for ShotParams {
    fn default() -> Self {
        Self {
            min_shot_len: DEFAULT_MIN_SHOT_LEN,
            sensitivity: DEFAULT_SENSITIVITY,
        }
    }
}

/// Incremental hard-cut detector. Feed frames in order with
/// [`ShotDetector::push`]; only one histogram per frame is retained.
#[derive(Debug, Default)]
pub struct ShotDetector {
    prev: Option<[f64; HISTOGRAM_BINS]>,
    /// `distances[i]` is the distance between frames `i` and `i+1`.
    distances: Vec<f64>,
    frames: u64,
}

impl ShotDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: &Frame) {
        self.push_histogram(luma_histogram(frame));
    }

    pub fn push_histogram(&mut self, hist: [f64; HISTOGRAM_BINS]) {
        if let Some(prev) = &self.prev {
            self.distances.push(chi_square(prev, &hist));
        }
        self.prev = Some(hist);
        self.frames += 1;
    }

    pub fn frame_count(&self) -> u64 {
        self.frames
    }

    /// Consecutive-frame distances seen so far.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Cut positions: frame `b` starts a new shot when the distance from
    /// `b-1` to `b` exceeds the adaptive threshold. A cut closer than
    /// `min_shot_len` to the previous one is dropped.
    pub fn boundaries(&self, params: ShotParams) -> Vec<u64> {
        let d = &self.distances;
        if d.is_empty() {
            return Vec::new();
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let threshold = mean + params.sensitivity * var.sqrt();
        let min_len = params.min_shot_len.max(1);

        let mut cuts = Vec::new();
        let mut last = 0u64;
        for (i, &dist) in d.iter().enumerate() {
            let b = i as u64 + 1;
            if dist > threshold && b - last >= min_len {
                cuts.push(b);
                last = b;
            }
        }
        cuts
    }

    pub fn finish(&self, params: ShotParams) -> Vec<Shot> {
        if self.frames == 0 {
            return Vec::new();
        }
        shots_from_boundaries(&self.boundaries(params), self.frames)
    }
}

/// Detects hard cuts over a frame sequence. Returns a single shot for
/// videos without cuts and an empty list for no frames.
pub fn detect_shots<'a>(frames: impl IntoIterator<Item = &'a Frame>, params: ShotParams) -> Vec<Shot> {
    let mut det = ShotDetector::new();
    for f in frames {
        det.push(f);
    }
    det.finish(params)
}

/// Serializes shots in the import format.
pub fn shots_to_json(shots: &[Shot]) -> String {
    let pairs: Vec<[u64; 2]> = shots.iter().map(|s| [s.start_frame, s.end_frame]).collect();
    serde_json::to_string(&pairs).expect("plain integers")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(index: u64, v: u8) -> Frame {
        Frame::filled(index, 16, 8, [v, v, v])
    }

    fn ranges(shots: &[Shot]) -> Vec<(u64, u64)> {
        shots.iter().map(|s| (s.start_frame, s.end_frame)).collect()
    }

    #[test]
    fn black_then_white() {
        let frames: Vec<Frame> = (0..200).map(|i| gray(i, if i < 100 { 0 } else { 255 })).collect();
        let shots = detect_shots(&frames, ShotParams::default());
        assert_eq!(ranges(&shots), vec![(0, 99), (100, 199)]);
    }

    #[test]
    fn constant_clip_is_one_shot() {
        let frames: Vec<Frame> = (0..50).map(|i| gray(i, 77)).collect();
        let shots = detect_shots(&frames, ShotParams::default());
        assert_eq!(ranges(&shots), vec![(0, 49)]);
        let one = detect_shots(&frames[..1], ShotParams::default());
        assert_eq!(ranges(&one), vec![(0, 0)]);
        assert!(detect_shots(&[], ShotParams::default()).is_empty());
    }

    #[test]
    fn close_cuts_keep_the_earlier_one() {
        // cuts at 30 and 35; with min_shot_len 10 only 30 survives
        let v = |i: u64| match i {
            0..=29 => 0,
            30..=34 => 128,
            _ => 255,
        };
        let frames: Vec<Frame> = (0..100).map(|i| gray(i, v(i))).collect();
        let shots = detect_shots(&frames, ShotParams { min_shot_len: 10, sensitivity: 1.0 });
        assert_eq!(ranges(&shots), vec![(0, 29), (30, 99)]);
        let shots = detect_shots(&frames, ShotParams { min_shot_len: 1, sensitivity: 1.0 });
        assert_eq!(ranges(&shots), vec![(0, 29), (30, 34), (35, 99)]);
    }

    #[test]
    fn import_examples() {
        assert_eq!(parse_shots("[[0,99],[100,249]]", 250).unwrap().len(), 2);
        assert!(matches!(parse_shots("[[0,99],[120,249]]", 250), Err(ShotError::Partition(_))));
        assert!(matches!(parse_shots("[[0,300]]", 250), Err(ShotError::Partition(_))));
        assert!(matches!(parse_shots("[[0,99],[90,249]]", 250), Err(ShotError::Partition(_))));
        assert!(matches!(parse_shots("[[0,99]]", 250), Err(ShotError::Partition(_))));
        assert!(matches!(parse_shots("{\"a\":1}", 250), Err(ShotError::Parse(_))));
        assert!(matches!(parse_shots("[[5,2]]", 250), Err(ShotError::Partition(_))));
    }

    #[test]
    fn chi_square_bounds() {
        let a = luma_histogram(&gray(0, 0));
        let b = luma_histogram(&gray(0, 255));
        assert_eq!(chi_square(&a, &a), 0.0);
        assert!((chi_square(&a, &b) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_is_always_a_partition(
            levels in proptest::collection::vec(0u8..=255, 1..120),
            min_len in 1u64..20,
            sens in 0.1f64..5.0,
        ) {
            let frames: Vec<Frame> = levels.iter().enumerate().map(|(i, &v)| gray(i as u64, v)).collect();
            let params = ShotParams { min_shot_len: min_len, sensitivity: sens };
            let shots = detect_shots(&frames, params);
            prop_assert!(validate_partition(&ranges(&shots), frames.len() as u64).is_ok());
            for s in &shots[..shots.len() - 1] {
                prop_assert!(s.num_frames() >= min_len);
            }
            prop_assert_eq!(shots, detect_shots(&frames, params));
        }
    }
}
