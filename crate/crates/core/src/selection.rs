//! Duration-constrained shot selection.
//!
//! Each shot is a knapsack item whose weight is its length in frames and
//! whose value is the sum of its frame scores. The budget is the target
//! duration in whole frames. Selection is an exact 0/1 knapsack solved by
//! dynamic programming over integer frame weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ImportanceSeries;
use crate::shots::Shot;

/// Shots kept for the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentSelection {
    selected: Vec<usize>,
    pub total_frames: u64,
    pub total_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("selected shot indices must be strictly ascending")]
    Unsorted,
    #[error("shot index {0} does not exist")]
    UnknownShot(usize),
}

impl FragmentSelection {
    /// Builds a selection from explicit indices, checking they are strictly
    /// ascending and refer to existing shots.
    pub fn from_indices(selected: Vec<usize>, shots: &[Shot], values: &[f64]) -> Result<Self, SelectionError> {
        if selected.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SelectionError::Unsorted);
        }
        if let Some(&bad) = selected.iter().find(|&&i| i >= shots.len()) {
            return Err(SelectionError::UnknownShot(bad));
        }
        let total_frames = selected.iter().map(|&i| shots[i].num_frames()).sum();
        let total_value = selected.iter().map(|&i| values.get(i).copied().unwrap_or(0.0)).sum();
        Ok(Self {
            selected,
            total_frames,
            total_value,
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// A knapsack item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotValue {
    pub value: f64,
    pub weight: u64,
}

/// Sums the importance over each shot's frames.
///
/// # Panics
/// If a shot extends past the end of the series.
pub fn aggregate_shot_values(series: &ImportanceSeries, shots: &[Shot]) -> Vec<ShotValue> {
    let scores = series.scores();
    shots
        .iter()
        .map(|s| {
            let range = s.start_frame as usize..=s.end_frame as usize;
            assert!(
                *range.end() < scores.len(),
                "shot {} ends at frame {} but only {} scores exist",
                s.index,
                s.end_frame,
                scores.len()
            );
            ShotValue {
                value: scores[range].iter().sum(),
                weight: s.num_frames(),
            }
        })
        .collect()
}

/// Frames that fit in `seconds` at `fps`, rounded down.
pub fn budget_frames(seconds: f64, fps: f64) -> u64 {
    if !(seconds > 0.0 && fps > 0.0) {
        return 0;
    }
    (seconds * fps + 1e-9).floor() as u64
}

/// Picks the subset of items of maximum total value whose total weight does
/// not exceed `budget`. Among equally valued subsets the lexicographically
/// smallest ascending index list wins. When everything fits, everything is
/// selected.
pub fn select_fragments(items: &[ShotValue], budget: u64) -> FragmentSelection {
    let total_weight: u64 = items.iter().map(|i| i.weight).sum();
    let chosen: Vec<usize> = if total_weight <= budget {
        (0..items.len()).collect()
    } else {
        knapsack(items, budget as usize)
    };
    let total_frames = chosen.iter().map(|&i| items[i].weight).sum();
    let total_value = chosen.iter().map(|&i| items[i].value).sum();
    FragmentSelection {
        selected: chosen,
        total_frames,
        total_value,
    }
}

fn knapsack(items: &[ShotValue], cap: usize) -> Vec<usize> {
    let n = items.len();
    let width = cap + 1;
    // best[i * width + c]: optimum over items i.. with capacity c
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        let (row, next) = best[i * width..].split_at_mut(width);
        let w = items[i].weight as usize;
        let v = items[i].value;
        for c in 0..width {
            let skip = next[c];
            row[c] = if w <= c { skip.max(v + next[c - w]) } else { skip };
        }
    }

    // relative tolerance keeps tie-breaking invariant under value scaling
    let eps = 1e-12 * items.iter().map(|i| i.value.abs()).sum::<f64>();
    let mut chosen = Vec::new();
    let mut c = cap;
    let mut remaining = best[c];
    for (i, item) in items.iter().enumerate() {
        if remaining <= eps {
            break;
        }
        let w = item.weight as usize;
        if w > c {
            continue;
        }
        let with = item.value + best[(i + 1) * width + c - w];
        if with >= remaining - eps {
            chosen.push(i);
            c -= w;
            remaining = best[(i + 1) * width + c];
        }
    }
    chosen
}

/// Frame ranges of the selected shots in temporal order. Adjacent shots are
/// kept as separate fragments.
pub fn assemble(selection: &FragmentSelection, shots: &[Shot]) -> Vec<(u64, u64)> {
    selection
        .selected
        .iter()
        .map(|&i| (shots[i].start_frame, shots[i].end_frame))
        .collect()
}
