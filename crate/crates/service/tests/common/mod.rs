//! Shared helpers for tests that drive the service over HTTP.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clipfit_core::media::{FrameRate, MediaConfig};
use clipfit_core::synthetic::{Disc, Scene, SyntheticClip};
use clipfit_service::{JobState, ServiceConfig};
use serde_json::Value;

pub fn config(data_dir: &Path) -> ServiceConfig {
    ServiceConfig {
        listen_addr: ([127, 0, 0, 1], 0).into(),
        data_dir: data_dir.to_path_buf(),
        allow_local_sources: true,
        ..ServiceConfig::default()
    }
}

pub struct Http {
    agent: ureq::Agent,
    pub base: String,
}

impl Http {
    pub fn new(base: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { agent, base }
    }

    fn decode(mut resp: ureq::http::Response<ureq::Body>) -> (u16, Value) {
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        Self::decode(self.agent.get(format!("{}{path}", self.base)).call().unwrap())
    }

    pub fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        let bytes = resp.body_mut().with_config().limit(1 << 30).read_to_vec().unwrap();
        (status, bytes)
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::decode(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body.to_string())
                .unwrap(),
        )
    }

    /// `parts`: (field name, optional file name, bytes).
    pub fn post_multipart(&self, path: &str, parts: &[(&str, Option<&str>, Vec<u8>)]) -> (u16, Value) {
        let boundary = "clipfit-test-boundary-7d1f";
        let mut body = Vec::new();
        for (name, file, data) in parts {
            body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
            match file {
                Some(f) => body.extend_from_slice(
                    format!(
                        "Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
                    )
                    .as_bytes(),
                ),
                None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
            }
            body.extend_from_slice(data);
            body.extend_from_slice(b"\r\n");
        }
        body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
        Self::decode(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", format!("multipart/form-data; boundary={boundary}"))
                .send(&body[..])
                .unwrap(),
        )
    }

    pub fn delete(&self, path: &str) -> (u16, Value) {
        Self::decode(self.agent.delete(format!("{}{path}", self.base)).call().unwrap())
    }

    /// Polls until the job is terminal, checking that progress never drops
    /// and states never move backwards between polls.
    pub fn wait_terminal(&self, id: &str, timeout: Duration) -> Value {
        let started = Instant::now();
        let mut last_progress = 0.0;
        let mut last_state: Option<JobState> = None;
        loop {
            let (code, st) = self.get(&format!("/api/v1/jobs/{id}"));
            assert_eq!(code, 200, "{st}");
            let progress = st["progress"].as_f64().unwrap();
            let state: JobState = serde_json::from_value(st["state"].clone()).unwrap();
            assert!(progress >= last_progress, "progress fell from {last_progress} to {progress}");
            if let Some(prev) = last_state {
                assert!(state >= prev, "state went back from {prev} to {state}");
            }
            last_progress = progress;
            last_state = Some(state);
            if st["terminal"].as_bool().unwrap() {
                return st;
            }
            assert!(started.elapsed() < timeout, "job {id} not finished after {timeout:?}: {st}");
            std::thread::sleep(Duration::from_millis(100));
        }
    }

    pub fn submit_local(&self, path: &Path, duration: f64, aspect: &str) -> String {
        let (code, body) = self.post_json(
            "/api/v1/jobs",
            &serde_json::json!({
                "url": path.to_string_lossy(),
                "custom": {"duration_sec": duration, "aspect": aspect},
            }),
        );
        assert_eq!(code, 202, "{body}");
        body["job_id"].as_str().unwrap().to_string()
    }
}

/// A watermarked clip of `shots` scenes; `tint` makes each clip's pixels
/// distinguishable from other clips'.
pub fn tinted_clip(width: u32, height: u32, shot_lengths: &[u64], tint: u8) -> SyntheticClip {
    let scenes = shot_lengths
        .iter()
        .enumerate()
        .map(|(i, &frames)| Scene {
            frames,
            background: [tint, (60 + 50 * i as u32).min(255) as u8, 255 - tint],
            disc: Some(Disc {
                color: if i % 2 == 0 { [250, 250, 250] } else { [10, 10, 10] },
                radius: height as f64 / 8.0,
                start: (width as f64 * (0.2 + 0.15 * i as f64), height as f64 * 0.4),
                velocity: (width as f64 / (3.0 * frames as f64), 0.0),
            }),
        })
        .collect();
    SyntheticClip {
        width,
        height,
        fps: FrameRate::new(25, 1),
        scenes,
        watermark_bits: 12,
    }
}

pub fn write_clip(clip: &SyntheticClip, dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(name);
    clip.write(&path, &MediaConfig::default()).unwrap();
    path
}
