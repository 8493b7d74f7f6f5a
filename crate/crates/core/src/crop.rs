//! Saliency-driven cropping to a target aspect ratio.
//!
//! Per frame: keep only the highest-intensity cluster of the saliency map,
//! take its intensity-weighted centroid as the focus point, smooth the
//! focus trajectory within each shot, then place a fixed-size window of the
//! target aspect ratio around the smoothed point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::saliency::SaliencyMap;
use crate::types::{even_floor, AspectRatio};

pub const DEFAULT_CLUSTERS: usize = 3;
pub const KMEANS_MAX_ITER: usize = 50;
pub const KMEANS_TOL: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_CONF_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CropError {
    #[error("aspect {aspect} cannot fit a {frame_w}x{frame_h} frame with even dimensions")]
    ImpossibleAspect {
        frame_w: u32,
        frame_h: u32,
        aspect: AspectRatio,
    },
}

/// Axis-aligned crop rectangle in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CropWindow {
    pub fn full(frame_w: u32, frame_h: u32) -> Self {
        Self {
            x: 0,
            y: 0,
            w: frame_w,
            h: frame_h,
        }
    }

    pub fn fits(&self, frame_w: u32, frame_h: u32) -> bool {
        self.w > 0
            && self.h > 0
            && self.x as u64 + self.w as u64 <= frame_w as u64
            && self.y as u64 + self.h as u64 <= frame_h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

/// Inferred center of attention for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusPoint {
    pub x: f64,
    pub y: f64,
    /// Fraction of the map's saliency mass retained by the clustering filter.
    pub confidence: f64,
}

/// A filtered map together with the mass of the map before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredMap {
    pub map: SaliencyMap,
    pub prefilter_mass: f64,
}

/// Outcome of 1-D clustering over weighted values.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<f64>,
    /// Cluster of each input value, parallel to the input.
    pub labels: Vec<usize>,
    pub iterations: usize,
}

impl Clustering {
    /// Index of the non-empty cluster with the highest centroid.
    pub fn top_cluster(&self) -> usize {
        let mut used = vec![false; self.centroids.len()];
        for &l in &self.labels {
            used[l] = true;
        }
        (0..self.centroids.len())
            .filter(|&c| used[c])
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if self.centroids[b] >= self.centroids[c] => Some(b),
                _ => Some(c),
            })
            .unwrap_or(0)
    }
}

/// Globally optimal 1-D k-means over ascending `values` with multiplicities.
///
/// Optimal 1-D clusters are contiguous runs of the sorted values, so this is
/// a dynamic program over split points, minimizing the weighted
/// within-cluster squared error. Each layer is filled by divide and conquer
/// on the monotone split positions. On equal cost the earliest split wins.
/// `k` is capped at the number of values.
pub fn optimal_kmeans_1d(values: &[f64], weights: &[f64], k: usize) -> Clustering {
    assert_eq!(values.len(), weights.len());
    assert!(k >= 1);
    debug_assert!(values.windows(2).all(|p| p[0] <= p[1]));
    let n = values.len();
    if n == 0 {
        return Clustering {
            centroids: vec![0.0; k],
            labels: Vec::new(),
            iterations: 0,
        };
    }
    let k = k.min(n);
    let mut pw = vec![0.0; n + 1];
    let mut ps = vec![0.0; n + 1];
    let mut pq = vec![0.0; n + 1];
    for i in 0..n {
        pw[i + 1] = pw[i] + weights[i];
        ps[i + 1] = ps[i] + weights[i] * values[i];
        pq[i + 1] = pq[i] + weights[i] * values[i] * values[i];
    }
    // error of the run [a, b)
    let cost = |a: usize, b: usize| {
        let w = pw[b] - pw[a];
        if w <= 0.0 {
            return 0.0;
        }
        let s = ps[b] - ps[a];
        (pq[b] - pq[a] - s * s / w).max(0.0)
    };

    // prev[i]: best error of the first i values in j-1 clusters
    let mut prev: Vec<f64> = (0..=n).map(|i| cost(0, i)).collect();
    let mut splits: Vec<Vec<usize>> = Vec::with_capacity(k);
    splits.push(vec![0; n + 1]);
    for j in 2..=k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        fill_layer(j, j, n, j - 1, n - 1, &prev, &mut cur, &mut arg, &cost);
        prev = cur;
        splits.push(arg);
    }

    let mut bounds = vec![n];
    let mut end = n;
    for j in (1..k).rev() {
        end = splits[j][end];
        bounds.push(end);
    }
    bounds.push(0);
    bounds.reverse();
    let mut labels = vec![0usize; n];
    let mut centroids = Vec::with_capacity(k);
    for c in 0..k {
        let (a, b) = (bounds[c], bounds[c + 1]);
        labels[a..b].fill(c);
        let w = pw[b] - pw[a];
        centroids.push(if w > 0.0 { (ps[b] - ps[a]) / w } else { values[a] });
    }
    Clustering {
        centroids,
        labels,
        iterations: 0,
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_layer(
    j: usize,
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    cost: &dyn Fn(usize, usize) -> f64,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let (mut best, mut best_m) = (f64::INFINITY, opt_lo.max(j - 1));
    let first = opt_lo.max(j - 1);
    for (m, p) in prev.iter().enumerate().take(opt_hi.min(mid - 1) + 1).skip(first) {
        let c = p + cost(m, mid);
        if best.is_infinite() || c < best - 1e-12 * best {
            best = c;
            best_m = m;
        }
    }
    cur[mid] = best;
    arg[mid] = best_m;
    if mid > lo {
        fill_layer(j, lo, mid - 1, opt_lo, best_m, prev, cur, arg, cost);
    }
    fill_layer(j, mid + 1, hi, best_m, opt_hi, prev, cur, arg, cost);
}

/// Lloyd's k-means on scalars with multiplicities. Can stop in a local
/// optimum; [`filter_by_clustering`] uses [`optimal_kmeans_1d`] instead.
///
/// Centroids start evenly spread over the value range at
/// `min + (2j+1)/(2k) * (max - min)`. A value equidistant to two centroids
/// joins the lower-index one. Empty clusters keep their centroid.
pub fn kmeans_1d(values: &[f64], weights: &[f64], k: usize, max_iter: usize, tol: f64) -> Clustering {
    assert_eq!(values.len(), weights.len());
    assert!(k >= 1);
    if values.is_empty() {
        return Clustering {
            centroids: vec![0.0; k],
            labels: Vec::new(),
            iterations: 0,
        };
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut centroids: Vec<f64> = (0..k)
        .map(|j| lo + (2 * j + 1) as f64 / (2 * k) as f64 * (hi - lo))
        .collect();
    let mut labels = vec![0usize; values.len()];
    let mut iterations = 0;

    let assign = |centroids: &[f64], labels: &mut [usize]| {
        for (v, l) in values.iter().zip(labels.iter_mut()) {
            let mut best = 0;
            let mut best_d = (v - centroids[0]).abs();
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = (v - c).abs();
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            *l = best;
        }
    };

    while iterations < max_iter {
        iterations += 1;
        assign(&centroids, &mut labels);
        let mut sum = vec![0.0; k];
        let mut mass = vec![0.0; k];
        for ((v, w), &l) in values.iter().zip(weights).zip(&labels) {
            sum[l] += v * w;
            mass[l] += w;
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if mass[j] > 0.0 {
                let c = sum[j] / mass[j];
                shift = shift.max((c - centroids[j]).abs());
                centroids[j] = c;
            }
        }
        if shift < tol {
            break;
        }
    }
    assign(&centroids, &mut labels);
    Clustering {
        centroids,
        labels,
        iterations,
    }
}

/// Distinct values of a map in ascending order with their pixel counts.
pub fn value_histogram(map: &SaliencyMap) -> (Vec<f32>, Vec<f64>) {
    let mut sorted: Vec<f32> = map.data().to_vec();
    sorted.sort_by(f32::total_cmp);
    let mut values: Vec<f32> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for v in sorted {
        if values.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            values.push(v);
            counts.push(1.0);
        }
    }
    (values, counts)
}

/// Zeroes every pixel outside the highest-centroid intensity cluster.
///
/// k-means runs over pixel intensities with `k` clusters, reduced to the
/// number of distinct intensities when there are fewer.
pub fn filter_by_clustering(map: &SaliencyMap, k: usize) -> FilteredMap {
    let (values, counts) = value_histogram(map);
    let k = k.max(1).min(values.len().max(1));
    let as_f64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let clustering = optimal_kmeans_1d(&as_f64, &counts, k);
    let top = clustering.top_cluster();
    // distinct values are sorted, so the retained cluster is an upper run
    let keep: Vec<f32> = values
        .iter()
        .zip(&clustering.labels)
        .filter(|(_, &l)| l == top)
        .map(|(&v, _)| v)
        .collect();
    let filtered = map.map_values(|_, v| {
        if keep.binary_search_by(|p| p.total_cmp(&v)).is_ok() {
            v
        } else {
            0.0
        }
    });
    FilteredMap {
        map: filtered,
        prefilter_mass: map.sum(),
    }
}

/// Intensity-weighted centroid of the retained pixels, mapped from map
/// cells to frame pixels (cell centers to pixel centers). Falls back to the
/// frame center when nothing salient remains.
pub fn infer_focus(filtered: &FilteredMap, frame_w: u32, frame_h: u32) -> FocusPoint {
    let map = &filtered.map;
    let (mw, mh) = (map.width() as usize, map.height() as usize);
    let (mut sx, mut sy, mut mass) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..mh {
        for x in 0..mw {
            let v = map.data()[y * mw + x] as f64;
            sx += v * x as f64;
            sy += v * y as f64;
            mass += v;
        }
    }
    let center = ((frame_w as f64 - 1.0) / 2.0, (frame_h as f64 - 1.0) / 2.0);
    let confidence = if filtered.prefilter_mass > 0.0 {
        (mass / filtered.prefilter_mass).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if confidence == 0.0 || mass <= 0.0 {
        return FocusPoint {
            x: center.0,
            y: center.1,
            confidence: 0.0,
        };
    }
    let scale_x = frame_w as f64 / mw as f64;
    let scale_y = frame_h as f64 / mh as f64;
    let x = ((sx / mass + 0.5) * scale_x - 0.5).clamp(0.0, frame_w as f64 - 1.0);
    let y = ((sy / mass + 0.5) * scale_y - 0.5).clamp(0.0, frame_h as f64 - 1.0);
    FocusPoint { x, y, confidence }
}

/// Smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub alpha: f64,
    pub conf_floor: f64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            conf_floor: DEFAULT_CONF_FLOOR,
        }
    }
}

/// Exponential moving average of focus points, restarted at every index in
/// `restarts` (positions in `points` where a new shot begins; position 0 is
/// always a restart). A low-confidence point repeats the previous smoothed
/// value instead of pulling on it.
pub fn smooth_centers(points: &[FocusPoint], restarts: &[usize], params: SmoothParams) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len());
    let mut restarts = restarts.iter().copied().peekable();
    let mut prev: Option<(f64, f64)> = None;
    for (t, p) in points.iter().enumerate() {
        while restarts.peek().is_some_and(|&r| r < t) {
            restarts.next();
        }
        if restarts.peek() == Some(&t) {
            prev = None;
        }
        let s = match prev {
            None => (p.x, p.y),
            Some(last) if p.confidence < params.conf_floor => last,
            Some((lx, ly)) => (
                params.alpha * p.x + (1.0 - params.alpha) * lx,
                params.alpha * p.y + (1.0 - params.alpha) * ly,
            ),
        };
        out.push(s);
        prev = Some(s);
    }
    out
}

/// Largest even-sized window of the target aspect ratio that fits the frame.
pub fn window_size(frame_w: u32, frame_h: u32, target: AspectRatio) -> Result<(u32, u32), CropError> {
    let (num, den) = (target.num() as u64, target.den() as u64);
    let (w, h) = if frame_w as u64 * den >= frame_h as u64 * num {
        let h = even_floor(frame_h as f64);
        (even_floor(h as f64 * num as f64 / den as f64), h)
    } else {
        let w = even_floor(frame_w as f64);
        (w, even_floor(w as f64 * den as f64 / num as f64))
    };
    if w == 0 || h == 0 {
        return Err(CropError::ImpossibleAspect {
            frame_w,
            frame_h,
            aspect: target,
        });
    }
    Ok((w, h))
}

/// Places the maximal window so its center is as close as possible to
/// `center`, clamped inside the frame.
pub fn window_for(center: (f64, f64), frame_w: u32, frame_h: u32, target: AspectRatio) -> Result<CropWindow, CropError> {
    let (w, h) = window_size(frame_w, frame_h, target)?;
    let place = |c: f64, size: u32, limit: u32| -> u32 {
        let max = (limit - size) as f64;
        let start = (c - size as f64 / 2.0).round();
        if start.is_nan() {
            return 0;
        }
        start.clamp(0.0, max) as u32
    };
    Ok(CropWindow {
        x: place(center.0, w, frame_w),
        y: place(center.1, h, frame_h),
        w,
        h,
    })
}

/// One row of the crop trace export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropTraceEntry {
    pub frame: u64,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CropTraceEntry {
    pub fn new(frame: u64, win: CropWindow) -> Self {
        Self {
            frame,
            x: win.x,
            y: win.y,
            w: win.w,
            h: win.h,
        }
    }

    pub fn window(&self) -> CropWindow {
        CropWindow {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}
