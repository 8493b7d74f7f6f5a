//! HTTP job service for clipfit.
//!
//! Clients submit a video (URL or upload) with a preset or custom target,
//! poll the job's state and progress, then fetch the result document and
//! the rendered summary. Jobs run on a fixed pool of worker threads in
//! submission order; each job's record is one JSON file under the data
//! directory, so finished jobs survive restarts and interrupted ones are
//! re-run.

pub mod api;
pub mod config;
pub mod job;
pub mod service;
pub mod store;
pub mod worker;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tracing::{info, warn};

pub use config::{ConfigError, ServiceConfig};
pub use job::{follows_canonical_order, JobState, SummaryJob};
pub use service::{Service, SubmitError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

fn spawn_purger(service: Arc<Service>) -> tokio::task::JoinHandle<()> {
    let every = service.config().purge_interval.max(std::time::Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let svc = service.clone();
            match tokio::task::spawn_blocking(move || svc.purge_expired()).await {
                Ok(0) => {}
                Ok(n) => info!(jobs = n, "purged expired artifacts"),
                Err(e) => warn!("purge task failed: {e}"),
            }
        }
    })
}

async fn run_on(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let purger = spawn_purger(service.clone());
    let app = api::router(service.clone());
    let served = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    purger.abort();
    let svc = service.clone();
    let _ = tokio::task::spawn_blocking(move || svc.shutdown()).await;
    served?;
    Ok(())
}

/// Serves until `shutdown` resolves, then stops the workers.
pub async fn serve(config: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    let addr = config.listen_addr;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let service = tokio::task::spawn_blocking(move || Service::start(config))
        .await
        .expect("service start task")?;
    info!(addr = %listener.local_addr()?, "listening");
    run_on(listener, service, shutdown).await
}

/// A service running on its own runtime thread.
pub struct ServiceHandle {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<(), ServeError>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Stops accepting requests and interrupts running jobs, which stay
    /// non-terminal on disk.
    pub fn shutdown(mut self) -> Result<(), ServeError> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().expect("service thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Starts the service in the background. Port 0 in `listen_addr` picks a
/// free port; see [`ServiceHandle::addr`].
pub fn spawn(config: ServiceConfig) -> Result<ServiceHandle, ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let addr = config.listen_addr;
    let listener = rt
        .block_on(TcpListener::bind(addr))
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let service = Service::start(config)?;
    let (tx, rx) = oneshot::channel::<()>();
    let svc = service.clone();
    let thread = std::thread::Builder::new()
        .name("clipfit-http".into())
        .spawn(move || {
            rt.block_on(run_on(listener, svc, async {
                let _ = rx.await;
            }))
        })?;
    Ok(ServiceHandle {
        addr,
        service,
        stop: Some(tx),
        thread: Some(thread),
    })
}
