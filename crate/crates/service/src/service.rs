//! The job service: submission, status, cancellation, worker pool.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use clipfit_core::media::Source;
use clipfit_core::preset::SpecError;
use clipfit_core::{AspectRatio, SummarySpec};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::config::ServiceConfig;
use crate::job::{JobError, JobState, SidecarRefs, SummaryJob};
use crate::store::{JobStore, StoreError};
use crate::worker::{worker_loop, JobQueue, WorkerContext};

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid summary spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported source: {0}")]
    UnsupportedSource(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<SpecError> for SubmitError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::UnknownPreset(id) => SubmitError::UnknownPreset(id),
            SpecError::Invalid(m) => SubmitError::InvalidSpec(m),
        }
    }
}

/// Custom target as submitted by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomSpec {
    pub duration_sec: f64,
    pub aspect: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecRequest {
    Preset(String),
    Custom(CustomSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobSource {
    /// HTTP(S) URL, or a local path/`file://` URL when the config allows it.
    Url(String),
    /// A file already stored in the job's upload directory.
    Upload { path: PathBuf, name: String },
}

#[derive(Debug, Clone)]
pub struct NewJob {
    /// Pre-allocated id, needed when uploads were stored before submission.
    pub id: Option<String>,
    pub source: JobSource,
    pub spec: SpecRequest,
    pub sidecars: SidecarRefs,
}

pub struct Service {
    config: Arc<ServiceConfig>,
    store: Arc<JobStore>,
    queue: Arc<JobQueue>,
    stopping: Arc<AtomicBool>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Service {
    /// Opens the data directory, recovers interrupted jobs and starts the
    /// worker threads.
    pub fn start(config: ServiceConfig) -> Result<Arc<Self>, StoreError> {
        let (store, pending) = JobStore::open(&config.data_dir)?;
        let config = Arc::new(config);
        let store = Arc::new(store);
        let queue = Arc::new(JobQueue::default());
        for id in pending {
            queue.push(id);
        }
        let stopping = Arc::new(AtomicBool::new(false));
        let ctx = Arc::new(WorkerContext {
            config: config.clone(),
            store: store.clone(),
            queue: queue.clone(),
            stopping: stopping.clone(),
        });
        let workers = (0..config.workers)
            .map(|n| {
                let ctx = ctx.clone();
                std::thread::Builder::new()
                    .name(format!("clipfit-worker-{n}"))
                    .spawn(move || worker_loop(ctx, n))
                    .expect("spawn worker thread")
            })
            .collect();
        info!(workers = config.workers, data_dir = %config.data_dir.display(), "service started");
        Ok(Arc::new(Self {
            config,
            store,
            queue,
            stopping,
            workers: Mutex::new(workers),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    pub fn new_job_id() -> String {
        uuid::Uuid::new_v4().simple().to_string()
    }

    pub fn upload_dir(&self, id: &str) -> PathBuf {
        self.store.upload_dir(id)
    }

    pub fn resolve_spec(&self, req: &SpecRequest) -> Result<SummarySpec, SubmitError> {
        match req {
            SpecRequest::Preset(id) => Ok(self.config.presets.resolve(id)?),
            SpecRequest::Custom(c) => {
                let aspect: AspectRatio = c
                    .aspect
                    .parse()
                    .map_err(|e| SubmitError::InvalidSpec(format!("aspect {:?}: {e}", c.aspect)))?;
                Ok(SummarySpec::custom(c.duration_sec, aspect)?)
            }
        }
    }

    fn check_url(&self, what: &str, url: &str) -> Result<(), SubmitError> {
        match Source::parse(url).map_err(|e| SubmitError::UnsupportedSource(e.to_string()))? {
            Source::Remote(_) => Ok(()),
            Source::Local(p) if self.config.allow_local_sources => {
                if p.exists() {
                    Ok(())
                } else {
                    Err(SubmitError::UnsupportedSource(format!("{what}: {} does not exist", p.display())))
                }
            }
            Source::Local(_) => Err(SubmitError::UnsupportedSource(format!(
                "{what}: only http(s) URLs or uploads are accepted"
            ))),
        }
    }

    fn is_own_upload(&self, id: &str, r: &str) -> bool {
        Path::new(r).starts_with(self.upload_dir(id))
    }

    /// Validates and persists a job in state `queued`, then enqueues it.
    pub fn submit(&self, req: NewJob) -> Result<SummaryJob, SubmitError> {
        let id = req.id.unwrap_or_else(Self::new_job_id);
        let spec = self.resolve_spec(&req.spec)?;
        let (source, input) = match req.source {
            JobSource::Url(url) => {
                let url = url.trim().to_string();
                self.check_url("source", &url)?;
                (url.clone(), url)
            }
            JobSource::Upload { path, name } => (name, path.to_string_lossy().into_owned()),
        };
        for (what, r) in [
            ("shots", &req.sidecars.shots),
            ("scores", &req.sidecars.scores),
            ("saliency", &req.sidecars.saliency),
        ] {
            if let Some(r) = r {
                if !self.is_own_upload(&id, r) {
                    self.check_url(what, r)?;
                }
            }
        }
        let job = SummaryJob::new(id.clone(), spec, source, input, req.sidecars);
        self.store.insert(job.clone())?;
        self.queue.push(id);
        Ok(job)
    }

    pub fn status(&self, id: &str) -> Option<SummaryJob> {
        self.store.get(id)
    }

    /// Cancels a pending job and/or deletes its artifacts. A running job is
    /// stopped at its next progress checkpoint and purged by its worker.
    pub fn cancel(&self, id: &str) -> Result<Option<SummaryJob>, StoreError> {
        let Some(job) = self.store.get(id) else { return Ok(None) };
        match job.state {
            JobState::Queued => {
                self.queue.remove(id);
                self.store.request_cancel(id);
                self.store.update(id, |j| {
                    j.error = Some(JobError {
                        stage: None,
                        message: "cancelled".into(),
                    });
                    j.advance(JobState::Failed)
                })?;
                self.store.purge(id)
            }
            s if s.is_terminal() => self.store.purge(id),
            _ => {
                self.store.request_cancel(id);
                Ok(self.store.get(id))
            }
        }
    }

    /// Purges artifacts of jobs past the retention period.
    pub fn purge_expired(&self) -> usize {
        let ids = self.store.expired(self.config.ttl);
        let n = ids.len();
        for id in ids {
            if let Err(e) = self.store.purge(&id) {
                tracing::warn!(%id, "purge failed: {e}");
            }
        }
        n
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Stops the workers. Running pipelines are interrupted and their jobs
    /// keep their non-terminal state, so the next start re-queues them.
    pub fn shutdown(&self) {
        self.stopping.store(true, Ordering::SeqCst);
        self.queue.close();
        for h in self.workers.lock().drain(..) {
            let _ = h.join();
        }
    }
}
