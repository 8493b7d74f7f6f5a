//! Plain-text `key = value` service configuration.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clipfit_core::media::MediaConfig;
use clipfit_core::pipeline::PipelineParams;
use clipfit_core::preset::{PlatformPreset, PresetRegistry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen_addr: SocketAddr,
    pub data_dir: PathBuf,
    pub workers: usize,
    /// Artifacts of finished jobs are deleted after this long.
    pub ttl: Duration,
    pub purge_interval: Duration,
    pub max_upload_bytes: usize,
    /// Accept `file://` URLs and bare paths as job sources.
    pub allow_local_sources: bool,
    /// Static UI bundle served under `/`; a placeholder page otherwise.
    pub ui_dir: Option<PathBuf>,
    pub media: MediaConfig,
    pub params: PipelineParams,
    pub presets: PresetRegistry,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: ([127, 0, 0, 1], 8080).into(),
            data_dir: PathBuf::from("clipfit-data"),
            workers: 2,
            ttl: Duration::from_secs(24 * 3600),
            purge_interval: Duration::from_secs(300),
            max_upload_bytes: 2 << 30,
            allow_local_sources: false,
            ui_dir: None,
            media: MediaConfig::default(),
            params: PipelineParams::default(),
            presets: PresetRegistry::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses config text on top of the defaults. Blank lines and lines
    /// starting with `#` are ignored; `preset.<id> = label | seconds | W:H`
    /// adds or replaces a preset.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let invalid = |message: String| ConfigError::Invalid { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected `key = value`, got {trimmed:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(invalid)?;
        }
        if cfg.workers == 0 {
            return Err(ConfigError::Invalid {
                line: 0,
                message: "workers must be at least 1".into(),
            });
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn hours(key: &str, v: &str) -> Result<Duration, String> {
            let h: f64 = num(key, v)?;
            if !(h >= 0.0 && h.is_finite()) {
                return Err(format!("{key}: must be a non-negative number"));
            }
            Ok(Duration::from_secs_f64(h * 3600.0))
        }
        match key {
            "listen_addr" => self.listen_addr = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "workers" => self.workers = num(key, value)?,
            "ttl_hours" => self.ttl = hours(key, value)?,
            "purge_interval_sec" => self.purge_interval = Duration::from_secs(num(key, value)?),
            "max_upload_bytes" => self.max_upload_bytes = num(key, value)?,
            "allow_local_sources" => self.allow_local_sources = num(key, value)?,
            "ui_dir" => self.ui_dir = Some(PathBuf::from(value)),
            "transcoder_path" => self.media.transcoder_path = PathBuf::from(value),
            "probe_template" => self.media.probe_template = value.to_string(),
            "decode_template" => self.media.decode_template = value.to_string(),
            "encode_template" => self.media.encode_template = value.to_string(),
            "work_dir" => self.media.work_dir = PathBuf::from(value),
            "fetch_timeout_sec" => self.media.fetch_timeout_sec = num(key, value)?,
            "min_shot_len" => self.params.shots.min_shot_len = num(key, value)?,
            "shot_sensitivity" => self.params.shots.sensitivity = num(key, value)?,
            "smoothing_alpha" => self.params.smoothing.alpha = num(key, value)?,
            "clusters" => self.params.clusters = num(key, value)?,
            "max_output_width" => self.params.output.max_width = num(key, value)?,
            "max_output_height" => self.params.output.max_height = num(key, value)?,
            _ => match key.strip_prefix("preset.") {
                Some(id) => {
                    let preset = PlatformPreset::parse_config(id, value).map_err(|e| e.to_string())?;
                    self.presets.insert(preset);
                }
                None => return Err(format!("unknown key {key:?}")),
            },
        }
        Ok(())
    }
}
