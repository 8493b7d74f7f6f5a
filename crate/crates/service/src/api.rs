//! JSON/HTTP API and static UI.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use clipfit_core::pipeline::Stage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::io::AsyncWriteExt;
use tower::ServiceExt;
use tower_http::services::{ServeDir, ServeFile};

use crate::job::{JobState, SidecarRefs, SummaryJob};
use crate::service::{CustomSpec, JobSource, NewJob, Service, SpecRequest, SubmitError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no job {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let code = match &e {
            SubmitError::UnknownPreset(_) => "UnknownPreset",
            SubmitError::InvalidSpec(_) => "InvalidSpec",
            SubmitError::UnsupportedSource(_) => "UnsupportedSource",
            SubmitError::Store(_) => return ApiError::internal(e.to_string()),
        };
        ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON submission body.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitBody {
    pub url: Option<String>,
    pub preset: Option<String>,
    pub custom: Option<CustomSpec>,
    #[serde(default)]
    pub sidecars: SidecarRefs,
}

fn spec_request(preset: Option<String>, custom: Option<CustomSpec>) -> ApiResult<SpecRequest> {
    match (preset, custom) {
        (Some(p), None) => Ok(SpecRequest::Preset(p)),
        (None, Some(c)) => Ok(SpecRequest::Custom(c)),
        (Some(_), Some(_)) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidSpec",
            "give either preset or custom, not both",
        )),
        (None, None) => Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidSpec", "missing preset or custom spec")),
    }
}

/// Status document returned by the job endpoints.
#[derive(Debug, Serialize)]
struct StatusView<'a> {
    id: &'a str,
    state: JobState,
    stage: Option<Stage>,
    progress: f64,
    terminal: bool,
    attempt: u32,
    label: String,
    spec: &'a clipfit_core::SummarySpec,
    source: &'a str,
    created: chrono::DateTime<chrono::Utc>,
    updated: chrono::DateTime<chrono::Utc>,
    finished: Option<chrono::DateTime<chrono::Utc>>,
    error: Option<&'a crate::job::JobError>,
    purged: bool,
    history: &'a [crate::job::Transition],
}

fn status_view<'a>(svc: &Service, job: &'a SummaryJob) -> StatusView<'a> {
    let label = svc
        .config()
        .presets
        .get(&job.spec.origin)
        .map(|p| p.label.clone())
        .unwrap_or_else(|| format!("{} s, {}", job.spec.target_duration, job.spec.aspect));
    StatusView {
        id: &job.id,
        state: job.state,
        stage: job.stage,
        progress: job.progress,
        terminal: job.state.is_terminal(),
        attempt: job.attempt,
        label,
        spec: &job.spec,
        source: &job.source,
        created: job.created,
        updated: job.updated,
        finished: job.finished,
        error: job.error.as_ref(),
        purged: job.purged.is_some(),
        history: &job.history,
    }
}

pub fn router(service: Arc<Service>) -> Router {
    let upload_limit = service.config().max_upload_bytes;
    let api = Router::new()
        .route("/jobs", axum::routing::post(submit).layer(DefaultBodyLimit::max(upload_limit)))
        .route("/jobs/{id}", get(status).delete(cancel))
        .route("/jobs/{id}/result", get(result))
        .route("/jobs/{id}/download", get(download))
        .route("/jobs/{id}/source", get(source))
        .route("/presets", get(presets))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") });

    let app = Router::new().nest("/api/v1", api);
    let app = match service.config().ui_dir.clone().filter(|d| d.is_dir()) {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    };
    app.with_state(service)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("task failed: {e}")))
}

async fn submit(State(svc): State<Arc<Service>>, req: Request) -> ApiResult<Response> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let new = if is_multipart {
        let id = Service::new_job_id();
        let mp = Multipart::from_request(req, &svc)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        match read_multipart(&svc, &id, mp).await {
            Ok(new) => new,
            Err(e) => {
                let _ = tokio::fs::remove_dir_all(svc.upload_dir(&id)).await;
                return Err(e);
            }
        }
    } else {
        let Json(body) = Json::<SubmitBody>::from_request(req, &svc)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let url = body
            .url
            .filter(|u| !u.trim().is_empty())
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "UnsupportedSource", "missing url"))?;
        NewJob {
            id: None,
            source: JobSource::Url(url),
            spec: spec_request(body.preset, body.custom)?,
            sidecars: body.sidecars,
        }
    };
    let upload_dir = new.id.as_ref().map(|id| svc.upload_dir(id));
    let job = {
        let svc = svc.clone();
        blocking(move || svc.submit(new)).await?
    };
    let job = match job {
        Ok(j) => j,
        Err(e) => {
            if let Some(dir) = upload_dir {
                let _ = tokio::fs::remove_dir_all(dir).await;
            }
            return Err(e.into());
        }
    };
    let location = format!("/api/v1/jobs/{}", job.id);
    let mut resp = (
        StatusCode::ACCEPTED,
        Json(json!({"job_id": job.id, "status_url": location})),
    )
        .into_response();
    if let Ok(v) = HeaderValue::from_str(&location) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    Ok(resp)
}

fn file_ext(name: &str) -> String {
    name.rsplit_once('.')
        .map(|(_, e)| e.to_ascii_lowercase())
        .filter(|e| !e.is_empty() && e.len() <= 5 && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .unwrap_or_else(|| "bin".into())
}

async fn read_multipart(svc: &Service, id: &str, mut mp: Multipart) -> ApiResult<NewJob> {
    let dir = svc.upload_dir(id);
    let mut upload: Option<(PathBuf, String)> = None;
    let mut url = None;
    let mut preset = None;
    let mut custom_json = None;
    let mut duration = None;
    let mut aspect = None;
    let mut sidecars = SidecarRefs::default();

    while let Some(mut field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        if let Some(file_name) = field.file_name().map(str::to_string) {
            if !matches!(name.as_str(), "file" | "shots" | "scores" | "saliency") {
                return Err(ApiError::bad_request(format!("unexpected file field {name:?}")));
            }
            tokio::fs::create_dir_all(&dir)
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            let stem = if name == "file" { "source" } else { name.as_str() };
            let path = dir.join(format!("{stem}.{}", file_ext(&file_name)));
            let mut out = tokio::fs::File::create(&path)
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            while let Some(chunk) = field.chunk().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
                out.write_all(&chunk).await.map_err(|e| ApiError::internal(e.to_string()))?;
            }
            out.flush().await.map_err(|e| ApiError::internal(e.to_string()))?;
            let stored = path.to_string_lossy().into_owned();
            match name.as_str() {
                "file" => upload = Some((path, file_name)),
                "shots" => sidecars.shots = Some(stored),
                "scores" => sidecars.scores = Some(stored),
                _ => sidecars.saliency = Some(stored),
            }
            continue;
        }
        let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let text = text.trim().to_string();
        if text.is_empty() {
            continue;
        }
        match name.as_str() {
            "url" => url = Some(text),
            "preset" => preset = Some(text),
            "custom" => custom_json = Some(text),
            "duration_sec" => duration = Some(text),
            "aspect" => aspect = Some(text),
            "shots" => sidecars.shots = Some(text),
            "scores" => sidecars.scores = Some(text),
            "saliency" => sidecars.saliency = Some(text),
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }

    let invalid = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "InvalidSpec", m);
    let custom = match (custom_json, duration, aspect) {
        (Some(j), None, None) => Some(serde_json::from_str::<CustomSpec>(&j).map_err(|e| invalid(format!("custom: {e}")))?),
        (None, Some(d), Some(a)) => Some(CustomSpec {
            duration_sec: d.parse().map_err(|_| invalid(format!("duration_sec {d:?} is not a number")))?,
            aspect: a,
        }),
        (None, None, None) => None,
        _ => return Err(invalid("custom spec needs duration_sec and aspect".into())),
    };
    let source = match (upload, url) {
        (Some((path, name)), None) => JobSource::Upload { path, name },
        (None, Some(u)) => JobSource::Url(u),
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give either a file or a url, not both")),
        (None, None) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "UnsupportedSource", "missing file or url"))
        }
    };
    Ok(NewJob {
        id: Some(id.to_string()),
        source,
        spec: spec_request(preset, custom)?,
        sidecars,
    })
}

fn find(svc: &Service, id: &str) -> ApiResult<SummaryJob> {
    svc.status(id).ok_or_else(|| ApiError::not_found(id))
}

async fn status(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = find(&svc, &id)?;
    Ok(Json(serde_json::to_value(status_view(&svc, &job)).expect("serializable")))
}

async fn cancel(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = {
        let svc = svc.clone();
        let id = id.clone();
        blocking(move || svc.cancel(&id)).await?
    }
    .map_err(|e| ApiError::internal(e.to_string()))?
    .ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(serde_json::to_value(status_view(&svc, &job)).expect("serializable")))
}

/// A finished job whose artifacts are still on disk.
fn finished(svc: &Service, id: &str) -> ApiResult<SummaryJob> {
    let job = find(svc, id)?;
    if job.state != JobState::Done {
        let detail = match &job.error {
            Some(e) => format!("job is {}: {}", job.state, e.message),
            None => format!("job is {}", job.state),
        };
        return Err(ApiError::new(StatusCode::CONFLICT, "NotReady", detail));
    }
    if job.purged.is_some() {
        return Err(ApiError::new(StatusCode::GONE, "Gone", "artifacts of this job were purged"));
    }
    Ok(job)
}

async fn result(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = finished(&svc, &id)?;
    let mut doc = serde_json::to_value(job.result.as_ref().expect("done jobs have results")).expect("serializable");
    if let Value::Object(map) = &mut doc {
        map.insert("job_id".into(), json!(job.id));
        map.insert("download_url".into(), json!(format!("/api/v1/jobs/{}/download", job.id)));
    }
    Ok(Json(doc))
}

async fn send_file(path: PathBuf, content_type: &str, attachment: Option<String>, req: Request) -> ApiResult<Response> {
    if !path.is_file() {
        return Err(ApiError::new(StatusCode::GONE, "Gone", "file is no longer available"));
    }
    let mut resp = ServeFile::new_with_mime(&path, &content_type.parse().expect("valid mime"))
        .oneshot(req)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Body::new);
    if let Some(name) = attachment {
        if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"{name}\"")) {
            resp.headers_mut().insert(header::CONTENT_DISPOSITION, v);
        }
    }
    Ok(resp)
}

async fn download(State(svc): State<Arc<Service>>, Path(id): Path<String>, req: Request) -> ApiResult<Response> {
    let job = finished(&svc, &id)?;
    let out = job.result.expect("done jobs have results");
    let ext = out.output_path.extension().and_then(|e| e.to_str()).unwrap_or("mp4").to_string();
    let mime = if ext == "mp4" { "video/mp4".to_string() } else { format!("video/{ext}") };
    send_file(out.output_path, &mime, Some(format!("summary-{id}.{ext}")), req).await
}

/// The original video, for side-by-side playback.
async fn source(State(svc): State<Arc<Service>>, Path(id): Path<String>, req: Request) -> ApiResult<Response> {
    let job = find(&svc, &id)?;
    if job.purged.is_some() {
        return Err(ApiError::new(StatusCode::GONE, "Gone", "artifacts of this job were purged"));
    }
    let path = match &job.result {
        Some(r) => r.asset.path.clone(),
        None => PathBuf::from(&job.input),
    };
    if !path.starts_with(svc.store().root()) {
        // never serve arbitrary local files, only what the service stored
        return Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", "source is not stored by the service"));
    }
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("webm") => "video/webm",
        Some("mov") => "video/quicktime",
        _ => "video/mp4",
    };
    send_file(path, mime, None, req).await
}

async fn presets(State(svc): State<Arc<Service>>) -> Json<Value> {
    Json(serde_json::to_value(svc.config().presets.all()).expect("serializable"))
}

const PLACEHOLDER_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>clipfit</title></head>
<body>
<h1>clipfit</h1>
<p>No UI bundle is installed. Set <code>ui_dir</code> in the service config to serve one.</p>
<p>API: <code>POST /api/v1/jobs</code>, <code>GET /api/v1/jobs/{id}</code>,
<code>GET /api/v1/jobs/{id}/result</code>, <code>GET /api/v1/jobs/{id}/download</code>,
<code>GET /api/v1/presets</code>, <code>DELETE /api/v1/jobs/{id}</code>.</p>
</body></html>
"#;
