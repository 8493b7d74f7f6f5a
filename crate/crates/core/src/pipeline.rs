//! End-to-end summary production: fetch, probe, segment, score, select,
//! saliency, crop, render.
//!
//! Saliency is computed only for frames that made it into the summary, so
//! the spatial pass always runs after selection.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::crop::{
    filter_by_clustering, infer_focus, smooth_centers, window_for, window_size, CropError, CropTraceEntry,
    CropWindow, FocusPoint, SmoothParams, DEFAULT_CLUSTERS,
};
use crate::media::{self, MediaConfig, MediaError, OutputSpec, RenderRequest, Source, VideoAsset};
use crate::preset::SummarySpec;
use crate::saliency::{self, SaliencyError, SaliencyMap, SaliencySource, DEFAULT_MAP_SIZE};
use crate::scoring::{self, ImportanceSeries, MotionScorer, ScoreError};
use crate::selection::{self, FragmentSelection};
use crate::shots::{self, Shot, ShotDetector, ShotError, ShotParams};
use crate::types::AspectRatio;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fetching,
    Probing,
    Segmenting,
    Scoring,
    Selecting,
    Saliency,
    Cropping,
    Rendering,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Fetching,
        Stage::Probing,
        Stage::Segmenting,
        Stage::Scoring,
        Stage::Selecting,
        Stage::Saliency,
        Stage::Cropping,
        Stage::Rendering,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Fetching => "fetching",
            Stage::Probing => "probing",
            Stage::Segmenting => "segmenting",
            Stage::Scoring => "scoring",
            Stage::Selecting => "selecting",
            Stage::Saliency => "saliency",
            Stage::Cropping => "cropping",
            Stage::Rendering => "rendering",
        }
    }

    /// Share of overall progress, roughly proportional to typical cost.
    fn weight(&self) -> f64 {
        match self {
            Stage::Fetching => 0.05,
            Stage::Probing => 0.05,
            Stage::Segmenting => 0.25,
            Stage::Scoring => 0.05,
            Stage::Selecting => 0.02,
            Stage::Saliency => 0.2,
            Stage::Cropping => 0.03,
            Stage::Rendering => 0.35,
        }
    }

    /// Overall progress in `[0, 1]` at `fraction` through this stage.
    pub fn overall_progress(&self, fraction: f64) -> f64 {
        let before: f64 = Stage::ALL.iter().take_while(|s| *s != self).map(Stage::weight).sum();
        (before + self.weight() * fraction.clamp(0.0, 1.0)).min(1.0)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineErrorKind {
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Shots(#[from] ShotError),
    #[error(transparent)]
    Scores(#[from] ScoreError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Crop(#[from] CropError),
    #[error("no shot fits within {budget_sec:.2} s (shortest shot is {shortest_sec:.2} s)")]
    NothingFits { budget_sec: f64, shortest_sec: f64 },
    #[error("cancelled")]
    Cancelled,
}

/// A failure, tagged with the stage it happened in.
#[derive(Debug, Error)]
#[error("{stage} failed: {kind}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub kind: PipelineErrorKind,
}

impl PipelineError {
    pub fn is_cancelled(&self) -> bool {
        matches!(self.kind, PipelineErrorKind::Cancelled)
    }
}

/// Optional outputs of external models, used instead of the built-ins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecars {
    pub shots: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// SALM file or PNG directory with one map per source frame.
    pub saliency: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInput {
    /// Local path, `file://` URL or HTTP(S) URL.
    pub source: String,
    pub spec: SummarySpec,
    pub sidecars: Sidecars,
    /// Scratch directory for this run; downloads and the output land here.
    pub work_dir: PathBuf,
    /// Where to write the summary; defaults to `work_dir/summary.<ext>`.
    pub output: Option<PathBuf>,
}

/// Tunables of the built-in stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub shots: ShotParams,
    pub smoothing: SmoothParams,
    pub clusters: usize,
    pub saliency_map_size: u32,
    pub output: OutputSpec,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            shots: ShotParams::default(),
            smoothing: SmoothParams::default(),
            clusters: DEFAULT_CLUSTERS,
            saliency_map_size: DEFAULT_MAP_SIZE,
            output: OutputSpec::default(),
        }
    }
}

/// One kept fragment, inclusive frame range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentDoc {
    pub shot: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_sec: f64,
    pub end_sec: f64,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub asset: VideoAsset,
    pub spec: SummarySpec,
    pub shots: Vec<Shot>,
    pub selection: FragmentSelection,
    pub fragments: Vec<FragmentDoc>,
    pub crop_trace: Vec<CropTraceEntry>,
    pub output_path: PathBuf,
    pub output_width: u32,
    pub output_height: u32,
    pub source_duration: f64,
    pub summary_duration: f64,
    pub target_duration: f64,
}

/// Receives `(stage, fraction of that stage done)`. Returning `false`
/// cancels the run at the next checkpoint.
pub trait Observer {
    fn progress(&mut self, stage: Stage, fraction: f64) -> bool;
}

impl<F: FnMut(Stage, f64) -> bool> Observer for F {
    fn progress(&mut self, stage: Stage, fraction: f64) -> bool {
        self(stage, fraction)
    }
}

struct Run<'a> {
    observer: &'a mut dyn Observer,
    stage: Stage,
}

impl Run<'_> {
    fn enter(&mut self, stage: Stage) -> Result<(), PipelineError> {
        self.stage = stage;
        info!(%stage, "stage");
        self.report(0.0)
    }

    fn report(&mut self, fraction: f64) -> Result<(), PipelineError> {
        if self.observer.progress(self.stage, fraction) {
            Ok(())
        } else {
            Err(self.fail(PipelineErrorKind::Cancelled))
        }
    }

    fn fail(&self, kind: impl Into<PipelineErrorKind>) -> PipelineError {
        PipelineError {
            stage: self.stage,
            kind: kind.into(),
        }
    }
}

fn report_every(total: u64) -> u64 {
    (total / 50).max(1)
}

/// Runs the whole pipeline. Blocking; call from a worker thread.
pub fn run(
    input: &PipelineInput,
    params: &PipelineParams,
    media_cfg: &MediaConfig,
    observer: &mut dyn Observer,
) -> Result<PipelineOutput, PipelineError> {
    let mut run = Run {
        observer,
        stage: Stage::Fetching,
    };

    run.enter(Stage::Fetching)?;
    let source = Source::parse(&input.source).map_err(|e| run.fail(e))?;
    let local = match &source {
        Source::Remote(url) => media::fetch(
            url,
            &input.work_dir,
            Duration::from_secs(media_cfg.fetch_timeout_sec.max(1)),
        )
        .map_err(|e| run.fail(e))?,
        Source::Local(p) => {
            if !p.is_file() {
                return Err(run.fail(MediaError::SourceUnreachable(format!(
                    "{} does not exist",
                    p.display()
                ))));
            }
            p.clone()
        }
    };
    run.report(1.0)?;

    run.enter(Stage::Probing)?;
    let mut asset = media::probe(&local, media_cfg).map_err(|e| run.fail(e))?;
    asset.source = input.source.clone();
    run.report(1.0)?;
    let frame_count = asset.frame_count;
    // the spatial target must be achievable before any heavy work
    window_size(asset.width, asset.height, input.spec.aspect).map_err(|e| run.fail(e))?;

    run.enter(Stage::Segmenting)?;
    let imported_shots = match &input.sidecars.shots {
        Some(p) => Some(shots::import_shots(p, frame_count).map_err(|e| run.fail(e))?),
        None => None,
    };
    let imported_scores = match &input.sidecars.scores {
        Some(p) => Some(scoring::import_scores(p, frame_count).map_err(|e| run.fail(e))?),
        None => None,
    };
    let (shots, scores) = match (imported_shots, imported_scores) {
        (Some(s), Some(i)) => (s, i),
        (shots, scores) => {
            let (det, motion) = analysis_pass(&asset, shots.is_none(), scores.is_none(), media_cfg, &mut run)?;
            let shots = shots.unwrap_or_else(|| det.finish(params.shots));
            run.report(1.0)?;
            run.enter(Stage::Scoring)?;
            (shots, scores.unwrap_or_else(|| motion.finish()))
        }
    };
    if run.stage == Stage::Segmenting {
        run.report(1.0)?;
        run.enter(Stage::Scoring)?;
    }
    run.report(1.0)?;

    run.enter(Stage::Selecting)?;
    let (selection, fragments) = select(&asset, &shots, &scores, &input.spec).map_err(|k| run.fail(k))?;
    run.report(1.0)?;

    run.enter(Stage::Saliency)?;
    let saliency_source = match &input.sidecars.saliency {
        Some(p) => Some(saliency::open_saliency(p, frame_count).map_err(|e| run.fail(e))?),
        None => None,
    };
    let points = focus_pass(&asset, &fragments, saliency_source, params, media_cfg, &mut run)?;
    run.report(1.0)?;

    run.enter(Stage::Cropping)?;
    let windows = crop_windows(&points, &fragments, asset.width, asset.height, input.spec.aspect, params.smoothing)
        .map_err(|e| run.fail(e))?;
    let crop_trace: Vec<CropTraceEntry> = fragments
        .iter()
        .flat_map(|&(s, e)| s..=e)
        .zip(&windows)
        .map(|(f, w)| CropTraceEntry::new(f, *w))
        .collect();
    run.report(1.0)?;

    run.enter(Stage::Rendering)?;
    let output = input
        .output
        .clone()
        .unwrap_or_else(|| input.work_dir.join(format!("summary.{}", params.output.extension)));
    let req = RenderRequest {
        asset: &asset,
        fragments: &fragments,
        crops: &windows,
        target: input.spec.aspect,
        output_spec: &params.output,
        output: &output,
    };
    let mut cancelled = false;
    let rendered = media::render_summary(&req, media_cfg, |f| {
        if !cancelled && run.report(f).is_err() {
            cancelled = true;
        }
    });
    if cancelled {
        let _ = std::fs::remove_file(&output);
        return Err(run.fail(PipelineErrorKind::Cancelled));
    }
    let output_path = rendered.map_err(|e| run.fail(e))?;
    run.report(1.0)?;

    let fps = asset.frame_rate.as_f64();
    let (output_width, output_height) = params.output.output_dims(windows[0].w, windows[0].h, input.spec.aspect);
    let fragment_docs = selection
        .selected()
        .iter()
        .map(|&i| {
            let s = &shots[i];
            FragmentDoc {
                shot: i,
                start_frame: s.start_frame,
                end_frame: s.end_frame,
                start_sec: s.start_frame as f64 / fps,
                end_sec: (s.end_frame + 1) as f64 / fps,
            }
        })
        .collect();
    Ok(PipelineOutput {
        source_duration: asset.duration,
        summary_duration: selection.total_frames as f64 / fps,
        target_duration: input.spec.target_duration,
        spec: input.spec.clone(),
        asset,
        shots,
        selection,
        fragments: fragment_docs,
        crop_trace,
        output_path,
        output_width,
        output_height,
    })
}

/// One decode pass feeding the shot detector and/or the motion scorer.
fn analysis_pass(
    asset: &VideoAsset,
    need_shots: bool,
    need_scores: bool,
    cfg: &MediaConfig,
    run: &mut Run<'_>,
) -> Result<(ShotDetector, MotionScorer), PipelineError> {
    let mut det = ShotDetector::new();
    let mut motion = MotionScorer::new();
    let every = report_every(asset.frame_count);
    for frame in media::decode_frames(asset, 1, cfg).map_err(|e| run.fail(e))? {
        let frame = frame.map_err(|e| run.fail(e))?;
        if need_shots {
            det.push(&frame);
        }
        if need_scores {
            motion.push(&frame);
        }
        if frame.index % every == 0 {
            run.report(frame.index as f64 / asset.frame_count as f64)?;
        }
    }
    Ok((det, motion))
}

/// Budgeted knapsack over shots; returns the selection and its frame ranges.
pub fn select(
    asset: &VideoAsset,
    shots: &[Shot],
    scores: &ImportanceSeries,
    spec: &SummarySpec,
) -> Result<(FragmentSelection, Vec<(u64, u64)>), PipelineErrorKind> {
    let fps = asset.frame_rate.as_f64();
    let items = selection::aggregate_shot_values(scores, shots);
    let budget = selection::budget_frames(spec.target_duration, fps);
    let mut sel = selection::select_fragments(&items, budget);
    if sel.is_empty() {
        // Every shot is worth zero: fall back to the earliest shot that fits
        // rather than returning nothing.
        match items.iter().position(|i| i.weight <= budget) {
            Some(first) => {
                let values: Vec<f64> = items.iter().map(|i| i.value).collect();
                sel = FragmentSelection::from_indices(vec![first], shots, &values)
                    .expect("valid single index");
            }
            None => {
                let shortest = shots.iter().map(Shot::num_frames).min().unwrap_or(0);
                return Err(PipelineErrorKind::NothingFits {
                    budget_sec: spec.target_duration,
                    shortest_sec: shortest as f64 / fps,
                });
            }
        }
    }
    let fragments = selection::assemble(&sel, shots);
    Ok((sel, fragments))
}

/// Focus point for every frame inside `fragments`, in order.
fn focus_pass(
    asset: &VideoAsset,
    fragments: &[(u64, u64)],
    mut imported: Option<Box<dyn SaliencySource + Send>>,
    params: &PipelineParams,
    cfg: &MediaConfig,
    run: &mut Run<'_>,
) -> Result<Vec<FocusPoint>, PipelineError> {
    let total: u64 = fragments.iter().map(|(s, e)| e - s + 1).sum();
    let every = report_every(total);
    let mut points = Vec::with_capacity(total as usize);
    let mut push = |map: SaliencyMap, run: &mut Run<'_>| -> Result<(), PipelineError> {
        let filtered = filter_by_clustering(&map, params.clusters);
        points.push(infer_focus(&filtered, asset.width, asset.height));
        if (points.len() as u64).is_multiple_of(every) {
            run.report(points.len() as f64 / total as f64)?;
        }
        Ok(())
    };

    if let Some(src) = imported.as_mut() {
        for &(s, e) in fragments {
            for i in s..=e {
                let map = src.map(i).map_err(|e| run.fail(e))?;
                push(map, run)?;
            }
        }
    } else {
        let last = fragments.last().map_or(0, |f| f.1);
        let size = params.saliency_map_size;
        for frame in media::decode_frames(asset, 1, cfg).map_err(|e| run.fail(e))? {
            let frame = frame.map_err(|e| run.fail(e))?;
            if fragments.iter().any(|&(s, e)| (s..=e).contains(&frame.index)) {
                push(saliency::spectral_residual(&frame, size, size), run)?;
            }
            if frame.index >= last {
                break;
            }
        }
    }
    if points.len() as u64 != total {
        return Err(run.fail(MediaError::DecodeFailure {
            index: points.len() as u64,
            detail: format!("saliency covered {} of {total} frames", points.len()),
        }));
    }
    Ok(points)
}

/// Smooths focus points within each fragment and places a window per frame.
pub fn crop_windows(
    points: &[FocusPoint],
    fragments: &[(u64, u64)],
    frame_w: u32,
    frame_h: u32,
    aspect: AspectRatio,
    smoothing: SmoothParams,
) -> Result<Vec<CropWindow>, CropError> {
    let restarts: Vec<usize> = fragments
        .iter()
        .scan(0usize, |acc, &(s, e)| {
            let start = *acc;
            *acc += (e - s + 1) as usize;
            Some(start)
        })
        .collect();
    smooth_centers(points, &restarts, smoothing)
        .into_iter()
        .map(|c| window_for(c, frame_w, frame_h, aspect))
        .collect()
}

/// Spatial pass over in-memory frames: saliency, clustering filter, focus,
/// smoothing, windows. `restarts` marks the first frame of each shot.
pub fn crop_frames<'a>(
    frames: impl IntoIterator<Item = &'a crate::media::Frame>,
    restarts: &[usize],
    aspect: AspectRatio,
    params: &PipelineParams,
) -> Result<Vec<CropWindow>, CropError> {
    let mut dims = None;
    let points: Vec<FocusPoint> = frames
        .into_iter()
        .map(|f| {
            dims = Some((f.width, f.height));
            let map = saliency::spectral_residual(f, params.saliency_map_size, params.saliency_map_size);
            infer_focus(&filter_by_clustering(&map, params.clusters), f.width, f.height)
        })
        .collect();
    let Some((w, h)) = dims else { return Ok(Vec::new()) };
    smooth_centers(&points, restarts, params.smoothing)
        .into_iter()
        .map(|c| window_for(c, w, h, aspect))
        .collect()
}

/// Writes the result as pretty JSON.
pub fn write_result(path: &Path, out: &PipelineOutput) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(out).expect("serializable"))
}
