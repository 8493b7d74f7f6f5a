//! Job persistence: one JSON document per job under `<data_dir>/jobs`.
//!
//! All mutations go through [`JobStore::update`], which holds the store lock
//! while changing the record and writing it out, so each record has exactly
//! one writer at a time.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use parking_lot::Mutex;
use thiserror::Error;
use tracing::{info, warn};

use crate::job::{JobState, SummaryJob};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("job store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub struct JobStore {
    root: PathBuf,
    jobs: Mutex<HashMap<String, SummaryJob>>,
    cancel: Mutex<HashMap<String, Arc<AtomicBool>>>,
}

impl JobStore {
    /// Opens (or creates) a store. Jobs left mid-run by a previous process
    /// are reset to `queued` under a new attempt and their work directories
    /// discarded. Returns the store and the ids to enqueue, oldest first.
    pub fn open(root: &Path) -> Result<(Self, Vec<String>), StoreError> {
        for sub in ["jobs", "work", "uploads"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let store = Self {
            root: root.to_path_buf(),
            jobs: Mutex::new(HashMap::new()),
            cancel: Mutex::new(HashMap::new()),
        };
        let dir = root.join("jobs");
        let mut pending = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let mut job: SummaryJob = match serde_json::from_str(&text) {
                Ok(j) => j,
                Err(e) => {
                    warn!(path = %path.display(), "skipping unreadable job record: {e}");
                    continue;
                }
            };
            if !job.state.is_terminal() {
                if job.state != JobState::Queued {
                    info!(id = %job.id, state = %job.state, "restarting interrupted job");
                    job.restart();
                    let _ = fs::remove_dir_all(store.work_dir(&job.id));
                    store.write(&job)?;
                }
                pending.push((job.created, job.id.clone()));
            }
            store.jobs.lock().insert(job.id.clone(), job);
        }
        pending.sort();
        Ok((store, pending.into_iter().map(|(_, id)| id).collect()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn work_dir(&self, id: &str) -> PathBuf {
        self.root.join("work").join(id)
    }

    pub fn upload_dir(&self, id: &str) -> PathBuf {
        self.root.join("uploads").join(id)
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.json"))
    }

    fn write(&self, job: &SummaryJob) -> Result<(), StoreError> {
        let path = self.record_path(&job.id);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(job).expect("job records serialize");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn insert(&self, job: SummaryJob) -> Result<(), StoreError> {
        let mut jobs = self.jobs.lock();
        self.write(&job)?;
        jobs.insert(job.id.clone(), job);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<SummaryJob> {
        self.jobs.lock().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.jobs.lock().keys().cloned().collect()
    }

    /// Applies `f` to the record; it returns whether the change should be
    /// written to disk. Returns the updated record.
    pub fn update(&self, id: &str, f: impl FnOnce(&mut SummaryJob) -> bool) -> Result<Option<SummaryJob>, StoreError> {
        let mut jobs = self.jobs.lock();
        let Some(job) = jobs.get_mut(id) else {
            return Ok(None);
        };
        if f(job) {
            self.write(job)?;
        }
        Ok(Some(job.clone()))
    }

    /// Shared cancellation flag of a job.
    pub fn cancel_flag(&self, id: &str) -> Arc<AtomicBool> {
        self.cancel.lock().entry(id.to_string()).or_default().clone()
    }

    pub fn request_cancel(&self, id: &str) {
        self.cancel_flag(id).store(true, Ordering::SeqCst);
    }

    /// Deletes the job's work and upload directories and marks it purged.
    /// The status record stays.
    pub fn purge(&self, id: &str) -> Result<Option<SummaryJob>, StoreError> {
        for dir in [self.work_dir(id), self.upload_dir(id)] {
            match fs::remove_dir_all(&dir) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&dir)(e)),
            }
        }
        self.update(id, |j| {
            if j.purged.is_some() {
                return false;
            }
            j.purged = Some(Utc::now());
            true
        })
    }

    /// Finished jobs whose artifacts are older than `ttl`.
    pub fn expired(&self, ttl: Duration) -> Vec<String> {
        let now = Utc::now();
        let ttl = chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX);
        self.jobs
            .lock()
            .values()
            .filter(|j| j.purged.is_none() && j.finished.is_some_and(|f| now - f >= ttl))
            .map(|j| j.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job::SidecarRefs;
    use clipfit_core::{AspectRatio, SummarySpec};

    fn job(id: &str) -> SummaryJob {
        let spec = SummarySpec::custom(5.0, AspectRatio::PORTRAIT_9_16).unwrap();
        SummaryJob::new(id.into(), spec, "a.mp4".into(), "a.mp4".into(), SidecarRefs::default())
    }

    #[test]
    fn records_survive_reopen_and_running_jobs_restart() {
        let dir = tempfile::tempdir().unwrap();
        {
            let (store, pending) = JobStore::open(dir.path()).unwrap();
            assert!(pending.is_empty());
            for id in ["a", "b", "c"] {
                store.insert(job(id)).unwrap();
            }
            store.update("a", |j| j.advance(JobState::Done)).unwrap();
            store.update("b", |j| j.advance(JobState::Saliency)).unwrap();
            fs::create_dir_all(store.work_dir("b")).unwrap();
        }
        let (store, pending) = JobStore::open(dir.path()).unwrap();
        assert_eq!(store.get("a").unwrap().state, JobState::Done);
        let b = store.get("b").unwrap();
        assert_eq!((b.state, b.attempt), (JobState::Queued, 2));
        assert!(!store.work_dir("b").exists());
        let mut pending = pending;
        pending.sort();
        assert_eq!(pending, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn purge_keeps_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = JobStore::open(dir.path()).unwrap();
        store.insert(job("a")).unwrap();
        store.update("a", |j| j.advance(JobState::Done)).unwrap();
        fs::create_dir_all(store.work_dir("a")).unwrap();
        assert_eq!(store.expired(Duration::from_secs(3600)), Vec::<String>::new());
        assert_eq!(store.expired(Duration::ZERO), vec!["a".to_string()]);
        let j = store.purge("a").unwrap().unwrap();
        assert!(j.purged.is_some());
        assert!(!store.work_dir("a").exists());
        assert!(store.expired(Duration::ZERO).is_empty());
    }
}
