//! Job records and their state machine.

use std::fmt;

use chrono::{DateTime, Utc};
use clipfit_core::pipeline::{PipelineOutput, Stage};
use clipfit_core::SummarySpec;
use serde::{Deserialize, Serialize};

/// Job states in canonical order. A job only ever moves forward through
/// this list within one attempt, possibly skipping states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Fetching,
    Probing,
    Segmenting,
    Scoring,
    Selecting,
    Saliency,
    Cropping,
    Rendering,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Done => "done",
            JobState::Failed => "failed",
            other => other.stage().map(|s| s.as_str()).unwrap_or("?"),
        }
    }

    /// The pipeline stage this state stands for, if any.
    pub fn stage(self) -> Option<Stage> {
        Some(match self {
            JobState::Fetching => Stage::Fetching,
            JobState::Probing => Stage::Probing,
            JobState::Segmenting => Stage::Segmenting,
            JobState::Scoring => Stage::Scoring,
            JobState::Selecting => Stage::Selecting,
            JobState::Saliency => Stage::Saliency,
            JobState::Cropping => Stage::Cropping,
            JobState::Rendering => Stage::Rendering,
            _ => return None,
        })
    }
}

impl From<Stage> for JobState {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Fetching => JobState::Fetching,
            Stage::Probing => JobState::Probing,
            Stage::Segmenting => JobState::Segmenting,
            Stage::Scoring => JobState::Scoring,
            Stage::Selecting => JobState::Selecting,
            Stage::Saliency => JobState::Saliency,
            Stage::Cropping => JobState::Cropping,
            Stage::Rendering => JobState::Rendering,
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True if `states` is a subsequence of the canonical order: strictly
/// increasing, at most one terminal state, and only at the end.
pub fn follows_canonical_order(states: &[JobState]) -> bool {
    let increasing = states.windows(2).all(|w| w[0] < w[1]);
    let terminal = states.iter().filter(|s| s.is_terminal()).count();
    increasing && terminal <= 1 && states.iter().rev().skip(1).all(|s| !s.is_terminal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub attempt: u32,
    pub state: JobState,
    pub at: DateTime<Utc>,
}

/// Externally provided model outputs; each is a URL or a stored upload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SidecarRefs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saliency: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    /// Stage the failure happened in; absent when it happened outside the
    /// pipeline (e.g. cancellation while queued).
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJob {
    pub id: String,
    pub spec: SummarySpec,
    /// What the client submitted: a URL, or the original upload file name.
    pub source: String,
    /// Where the worker reads the video from.
    pub input: String,
    #[serde(default)]
    pub sidecars: SidecarRefs,
    pub state: JobState,
    /// Last pipeline stage entered in the current attempt.
    pub stage: Option<Stage>,
    pub progress: f64,
    pub attempt: u32,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub history: Vec<Transition>,
    pub result: Option<PipelineOutput>,
    pub error: Option<JobError>,
    /// Set once artifacts have been deleted.
    pub purged: Option<DateTime<Utc>>,
}

impl SummaryJob {
    pub fn new(id: String, spec: SummarySpec, source: String, input: String, sidecars: SidecarRefs) -> Self {
        let now = Utc::now();
        Self {
            id,
            spec,
            source,
            input,
            sidecars,
            state: JobState::Queued,
            stage: None,
            progress: 0.0,
            attempt: 1,
            created: now,
            updated: now,
            finished: None,
            history: vec![Transition {
                attempt: 1,
                state: JobState::Queued,
                at: now,
            }],
            result: None,
            error: None,
            purged: None,
        }
    }

    /// Moves to `state` if that is forward in the canonical order. Returns
    /// whether the state changed.
    pub fn advance(&mut self, state: JobState) -> bool {
        if state <= self.state || self.state.is_terminal() {
            return false;
        }
        let now = Utc::now();
        self.state = state;
        if let Some(stage) = state.stage() {
            self.stage = Some(stage);
        }
        self.updated = now;
        if state.is_terminal() {
            self.finished = Some(now);
        }
        if state == JobState::Done {
            self.progress = 1.0;
        }
        self.history.push(Transition {
            attempt: self.attempt,
            state,
            at: now,
        });
        true
    }

    /// Raises progress; never lowers it.
    pub fn set_progress(&mut self, progress: f64) {
        if progress > self.progress {
            self.progress = progress.min(1.0);
            self.updated = Utc::now();
        }
    }

    /// Starts over from `queued` under a new attempt number.
    pub fn restart(&mut self) {
        let now = Utc::now();
        self.attempt += 1;
        self.state = JobState::Queued;
        self.stage = None;
        self.progress = 0.0;
        self.updated = now;
        self.history.push(Transition {
            attempt: self.attempt,
            state: JobState::Queued,
            at: now,
        });
    }

    /// States visited during one attempt, in order.
    pub fn states_of_attempt(&self, attempt: u32) -> Vec<JobState> {
        self.history
            .iter()
            .filter(|t| t.attempt == attempt)
            .map(|t| t.state)
            .collect()
    }
}
