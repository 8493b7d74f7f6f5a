//! FIFO queue and the worker threads that run pipelines.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clipfit_core::media::{self, Source};
use clipfit_core::pipeline::{self, PipelineInput, Sidecars, Stage};
use parking_lot::{Condvar, Mutex};
use tracing::{error, info, warn};

use crate::config::ServiceConfig;
use crate::job::{JobError, JobState};
use crate::store::JobStore;

#[derive(Default)]
struct QueueState {
    items: VecDeque<String>,
    closed: bool,
}

/// Blocking multi-consumer FIFO of job ids.
#[derive(Default)]
pub struct JobQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
}

impl JobQueue {
    pub fn push(&self, id: String) {
        self.state.lock().items.push_back(id);
        self.ready.notify_one();
    }

    /// Next id, or `None` once the queue is closed.
    pub fn pop(&self) -> Option<String> {
        let mut st = self.state.lock();
        loop {
            if st.closed {
                return None;
            }
            if let Some(id) = st.items.pop_front() {
                return Some(id);
            }
            self.ready.wait(&mut st);
        }
    }

    pub fn remove(&self, id: &str) -> bool {
        let mut st = self.state.lock();
        let before = st.items.len();
        st.items.retain(|i| i != id);
        st.items.len() != before
    }

    pub fn len(&self) -> usize {
        self.state.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn close(&self) {
        self.state.lock().closed = true;
        self.ready.notify_all();
    }
}

/// What every worker shares.
pub(crate) struct WorkerContext {
    pub config: Arc<ServiceConfig>,
    pub store: Arc<JobStore>,
    pub queue: Arc<JobQueue>,
    /// Set on shutdown: running pipelines stop at their next checkpoint and
    /// their jobs are left for restart recovery.
    pub stopping: Arc<AtomicBool>,
}

pub(crate) fn worker_loop(ctx: Arc<WorkerContext>, n: usize) {
    while let Some(id) = ctx.queue.pop() {
        if ctx.stopping.load(Ordering::SeqCst) {
            break;
        }
        info!(worker = n, %id, "job started");
        if let Err(panic) = catch_unwind(AssertUnwindSafe(|| process(&ctx, &id))) {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "worker panicked".into());
            error!(%id, "pipeline panicked: {message}");
            fail(&ctx, &id, None, format!("internal error: {message}"));
        }
    }
}

fn fail(ctx: &WorkerContext, id: &str, stage: Option<Stage>, message: String) {
    let res = ctx.store.update(id, |j| {
        if j.state.is_terminal() {
            return false;
        }
        j.error = Some(JobError { stage, message });
        j.advance(JobState::Failed)
    });
    if let Err(e) = res {
        error!(%id, "cannot record failure: {e}");
    }
}

fn process(ctx: &WorkerContext, id: &str) {
    let Some(job) = ctx.store.get(id) else { return };
    if job.state != JobState::Queued {
        return;
    }
    let cancel = ctx.store.cancel_flag(id);
    let work_dir = ctx.store.work_dir(id);
    let _ = std::fs::remove_dir_all(&work_dir);
    if let Err(e) = std::fs::create_dir_all(&work_dir) {
        fail(ctx, id, Some(Stage::Fetching), format!("cannot create work directory: {e}"));
        return;
    }
    let _ = ctx.store.update(id, |j| j.advance(JobState::Fetching));

    let timeout = Duration::from_secs(ctx.config.media.fetch_timeout_sec.max(1));
    let resolve = |name: &str, r: &Option<String>| -> Result<Option<PathBuf>, String> {
        let Some(r) = r else { return Ok(None) };
        match Source::parse(r).map_err(|e| e.to_string())? {
            Source::Local(p) => Ok(Some(p)),
            Source::Remote(url) => {
                let dest = work_dir.join(format!("sidecar-{name}"));
                media::fetch_to(&url, &dest, timeout).map_err(|e| format!("{name} sidecar: {e}"))?;
                Ok(Some(dest))
            }
        }
    };
    let sidecars = (|| {
        Ok::<_, String>(Sidecars {
            shots: resolve("shots", &job.sidecars.shots)?,
            scores: resolve("scores", &job.sidecars.scores)?,
            saliency: resolve("saliency", &job.sidecars.saliency)?,
        })
    })();
    let sidecars = match sidecars {
        Ok(s) => s,
        Err(message) => {
            fail(ctx, id, Some(Stage::Fetching), message);
            return;
        }
    };

    let input = PipelineInput {
        source: job.input.clone(),
        spec: job.spec.clone(),
        sidecars,
        work_dir: work_dir.clone(),
        output: None,
    };
    let mut last_pct = -1i64;
    let mut observer = |stage: Stage, fraction: f64| {
        let overall = stage.overall_progress(fraction);
        let pct = (overall * 100.0).floor() as i64;
        let res = ctx.store.update(id, |j| {
            let moved = j.advance(stage.into());
            j.set_progress(overall);
            moved || pct != last_pct
        });
        last_pct = pct;
        if let Err(e) = res {
            warn!(%id, "cannot persist progress: {e}");
        }
        !cancel.load(Ordering::SeqCst) && !ctx.stopping.load(Ordering::SeqCst)
    };
    let outcome = pipeline::run(&input, &ctx.config.params, &ctx.config.media, &mut observer);

    match outcome {
        Ok(out) => {
            info!(%id, frames = out.selection.total_frames, "job done");
            let res = ctx.store.update(id, |j| {
                j.result = Some(out);
                j.advance(JobState::Done);
                true
            });
            if let Err(e) = res {
                error!(%id, "cannot record result: {e}");
            }
        }
        Err(e) if e.is_cancelled() && !cancel.load(Ordering::SeqCst) => {
            // shutdown, not a user cancel: leave the job for restart recovery
            info!(%id, "interrupted by shutdown");
        }
        Err(e) => {
            let message = if e.is_cancelled() { "cancelled".to_string() } else { e.kind.to_string() };
            info!(%id, stage = %e.stage, "job failed: {message}");
            fail(ctx, id, Some(e.stage), message);
            if e.is_cancelled() {
                let _ = ctx.store.purge(id);
            }
        }
    }
}
