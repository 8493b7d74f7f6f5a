//! Probing, decoding and rendering through an external transcoder.
//!
//! The crate carries no codecs. Every media operation spawns the configured
//! transcoder executable with one of three argument templates:
//!
//! * `probe_template`: must print the container's stream description on
//!   stderr (ffmpeg style `Stream #0:0: Video: ..., 1280x720, 25 fps`) and a
//!   final `frame=N` line counting decoded frames on stdout or stderr.
//! * `decode_template`: must write every `{stride}`-th frame to stdout as
//!   packed RGB24, row-major, no padding.
//! * `encode_template`: must read packed RGB24 frames of `{width}x{height}`
//!   at `{fps}` from stdin and write the container to `{output}`.
//!
//! Templates are split on whitespace before substitution, so substituted
//! paths may contain spaces.

use std::fmt;
use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, ExitStatus, Stdio};
use std::sync::OnceLock;
use std::thread::JoinHandle;
use std::time::Duration;

use image::{imageops, ImageBuffer, Rgb};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::crop::CropWindow;
use crate::types::{even_floor, AspectRatio};

pub const DEFAULT_PROBE_TEMPLATE: &str =
    "-hide_banner -nostdin -nostats -progress pipe:1 -i {input} -map 0:v:0 -f null -";
pub const DEFAULT_DECODE_TEMPLATE: &str = "-hide_banner -nostdin -loglevel error -i {input} -map 0:v:0 \
     -vf select=not(mod(n\\,{stride})) -fps_mode passthrough -f rawvideo -pix_fmt rgb24 -";
pub const DEFAULT_ENCODE_TEMPLATE: &str = "-hide_banner -nostdin -loglevel error -y \
     -f rawvideo -pix_fmt rgb24 -s {width}x{height} -r {fps} -i - \
     -c:v libx264 -preset veryfast -crf 16 -pix_fmt yuv420p -movflags +faststart {output}";

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("unsupported source: {0}")]
    UnsupportedSource(String),
    #[error("not a video: {0}")]
    NotAVideo(String),
    #[error("video has zero frames")]
    ZeroFrames,
    #[error("decode failed at frame {index}: {detail}")]
    DecodeFailure { index: u64, detail: String },
    #[error("transcoder exited with {code:?}: {stderr}")]
    TranscoderFailure { code: Option<i32>, stderr: String },
    #[error("cannot run transcoder {path:?}: {source}")]
    TranscoderUnavailable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no fragments selected")]
    EmptySelection,
    #[error("invalid render request: {0}")]
    InvalidRender(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Settings for the external transcoder and media scratch space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediaConfig {
    pub transcoder_path: PathBuf,
    pub probe_template: String,
    pub decode_template: String,
    pub encode_template: String,
    pub work_dir: PathBuf,
    pub fetch_timeout_sec: u64,
}

impl Default for MediaConfig {
    fn default() -> Self {
        let transcoder_path = std::env::var_os("CLIPFIT_TRANSCODER")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("ffmpeg"));
        Self {
            transcoder_path,
            probe_template: DEFAULT_PROBE_TEMPLATE.to_string(),
            decode_template: DEFAULT_DECODE_TEMPLATE.to_string(),
            encode_template: DEFAULT_ENCODE_TEMPLATE.to_string(),
            work_dir: std::env::temp_dir().join("clipfit"),
            fetch_timeout_sec: 60,
        }
    }
}

pub type TranscoderConfig = MediaConfig;

impl MediaConfig {
    /// Expands a template into an argument vector. Unknown placeholders are
    /// left untouched.
    pub fn expand(template: &str, vars: &[(&str, &str)]) -> Vec<String> {
        template
            .split_whitespace()
            .map(|tok| {
                vars.iter().fold(tok.to_string(), |acc, (k, v)| {
                    acc.replace(&format!("{{{k}}}"), v)
                })
            })
            .collect()
    }

    fn command(&self, args: &[String]) -> Command {
        let mut cmd = Command::new(&self.transcoder_path);
        cmd.args(args);
        cmd
    }

    fn spawn(&self, cmd: &mut Command) -> Result<Child, MediaError> {
        cmd.spawn().map_err(|source| MediaError::TranscoderUnavailable {
            path: self.transcoder_path.clone(),
            source,
        })
    }
}

/// Frame rate as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Self {
        assert!(num > 0 && den > 0, "frame rate terms must be positive");
        Self { num, den }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Parses the decimal rates printed by transcoders, mapping the NTSC
    /// family (29.97, 23.98, ...) back to their `/1001` rationals.
    pub fn from_decimal(s: &str) -> Option<Self> {
        let s = s.trim();
        let (s, mult) = match s.strip_suffix('k') {
            Some(rest) => (rest, 1000.0),
            None => (s, 1.0),
        };
        let v: f64 = s.parse::<f64>().ok()? * mult;
        if !(v.is_finite() && v > 0.0) {
            return None;
        }
        let ntsc = v * 1001.0 / 1000.0;
        if v.fract() != 0.0 && (ntsc - ntsc.round()).abs() < 0.02 * 1001.0 / 1000.0 {
            return Some(Self::new(ntsc.round() as u32 * 1000, 1001));
        }
        let milli = (v * 1000.0).round() as u64;
        let g = {
            let (mut a, mut b) = (milli, 1000u64);
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a
        };
        Some(Self::new((milli / g) as u32, (1000 / g) as u32))
    }

    /// Whole frames in `seconds`, rounded down.
    pub fn frames_in(&self, seconds: f64) -> u64 {
        (seconds * self.num as f64 / self.den as f64 + 1e-9).floor().max(0.0) as u64
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Metadata of a probed source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub id: String,
    pub source: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub frame_rate: FrameRate,
    pub frame_count: u64,
    pub duration: f64,
}

impl VideoAsset {
    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }
}

/// One decoded frame, packed RGB24.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u64,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("index", &self.index)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(index: u64, width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize * 3);
        Self {
            index,
            width,
            height,
            pixels,
        }
    }

    pub fn filled(index: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.repeat(width as usize * height as usize);
        Self::new(index, width, height, pixels)
    }

    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// BT.601 luma per pixel, row-major.
    pub fn luma(&self) -> Vec<f32> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect()
    }

    /// Copies the window out as a packed RGB24 buffer.
    pub fn crop(&self, win: &CropWindow) -> Vec<u8> {
        let row = self.width as usize * 3;
        let mut out = Vec::with_capacity(win.w as usize * win.h as usize * 3);
        for y in win.y..win.y + win.h {
            let start = y as usize * row + win.x as usize * 3;
            out.extend_from_slice(&self.pixels[start..start + win.w as usize * 3]);
        }
        out
    }
}

/// Where a video comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Local(PathBuf),
    Remote(String),
}

impl Source {
    pub fn parse(s: &str) -> Result<Self, MediaError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(MediaError::UnsupportedSource("empty source".into()));
        }
        let lower = s.to_ascii_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") {
            return Ok(Source::Remote(s.to_string()));
        }
        if let Some(p) = s.strip_prefix("file://") {
            return Ok(Source::Local(PathBuf::from(p)));
        }
        if let Some((scheme, _)) = s.split_once("://") {
            if scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)) {
                return Err(MediaError::UnsupportedSource(format!(
                    "scheme {scheme:?} is not supported"
                )));
            }
        }
        Ok(Source::Local(PathBuf::from(s)))
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, Source::Remote(_))
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Local(p) => write!(f, "{}", p.display()),
            Source::Remote(u) => f.write_str(u),
        }
    }
}

/// Downloads a plain HTTP(S) file into `dest_dir`, returning the local path.
pub fn fetch(url: &str, dest_dir: &Path, timeout: Duration) -> Result<PathBuf, MediaError> {
    fs::create_dir_all(dest_dir)?;
    let ext = url
        .split(['?', '#'])
        .next()
        .and_then(|p| p.rsplit('/').next())
        .and_then(|name| name.rsplit_once('.').map(|(_, e)| e))
        .filter(|e| !e.is_empty() && e.len() <= 5 && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .unwrap_or("bin");
    let dest = dest_dir.join(format!("source.{ext}"));
    fetch_to(url, &dest, timeout)?;
    Ok(dest)
}

/// Downloads a plain HTTP(S) file to `dest`.
pub fn fetch_to(url: &str, dest: &Path, timeout: Duration) -> Result<(), MediaError> {
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let mut resp = agent
        .get(url)
        .call()
        .map_err(|e| MediaError::SourceUnreachable(format!("{url}: {e}")))?;
    let mut reader = resp.body_mut().with_config().limit(u64::MAX).reader();
    let mut file = fs::File::create(dest)?;
    io::copy(&mut reader, &mut file)
        .map_err(|e| MediaError::SourceUnreachable(format!("{url}: {e}")))?;
    file.flush()?;
    Ok(())
}

/// Result of parsing probe output, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub width: u32,
    pub height: u32,
    pub frame_rate: FrameRate,
    pub frame_count: u64,
}

fn stream_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Stream #\d+:\d+.*?: Video: (.*)").unwrap())
}

/// Extracts dimensions, rate and frame count from transcoder probe output.
/// Returns `None` when no video stream is described.
pub fn parse_probe_output(stdout: &str, stderr: &str) -> Option<ProbeReport> {
    static DIMS: OnceLock<Regex> = OnceLock::new();
    static FPS: OnceLock<Regex> = OnceLock::new();
    static TBR: OnceLock<Regex> = OnceLock::new();
    static FRAMES: OnceLock<Regex> = OnceLock::new();
    let dims = DIMS.get_or_init(|| Regex::new(r"(?:^|[ ,])(\d{1,5})x(\d{1,5})(?:[ ,\[]|$)").unwrap());
    let fps = FPS.get_or_init(|| Regex::new(r"([\d.]+k?) fps").unwrap());
    let tbr = TBR.get_or_init(|| Regex::new(r"([\d.]+k?) tbr").unwrap());
    let frames = FRAMES.get_or_init(|| Regex::new(r"frame=\s*(\d+)").unwrap());

    let video = stream_re().captures(stderr)?.get(1)?.as_str();
    let d = dims.captures(video)?;
    let width = d[1].parse().ok()?;
    let height = d[2].parse().ok()?;
    let frame_rate = fps
        .captures(video)
        .or_else(|| tbr.captures(video))
        .and_then(|c| FrameRate::from_decimal(&c[1]))?;
    let last_count = |text: &str| {
        frames
            .captures_iter(text)
            .filter_map(|c| c[1].parse::<u64>().ok())
            .last()
    };
    // machine progress on stdout wins over the human stats line
    let frame_count = last_count(stdout).or_else(|| last_count(stderr)).unwrap_or(0);
    Some(ProbeReport {
        width,
        height,
        frame_rate,
        frame_count,
    })
}

fn stderr_tail(bytes: &[u8]) -> String {
    let s = String::from_utf8_lossy(bytes);
    let lines: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
    lines[lines.len().saturating_sub(6)..].join("\n")
}

/// Probes a local video file. The frame count comes from a full decode.
pub fn probe(path: &Path, cfg: &MediaConfig) -> Result<VideoAsset, MediaError> {
    let meta = fs::metadata(path)
        .map_err(|e| MediaError::SourceUnreachable(format!("{}: {e}", path.display())))?;
    if !meta.is_file() {
        return Err(MediaError::SourceUnreachable(format!("{} is not a file", path.display())));
    }
    if meta.len() == 0 {
        return Err(MediaError::NotAVideo(format!("{} is empty", path.display())));
    }
    let input = path.to_string_lossy();
    let args = MediaConfig::expand(&cfg.probe_template, &[("input", &input)]);
    let mut cmd = cfg.command(&args);
    cmd.stdin(Stdio::null());
    let out = cmd.output().map_err(|source| MediaError::TranscoderUnavailable {
        path: cfg.transcoder_path.clone(),
        source,
    })?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    if !out.status.success() {
        return Err(MediaError::NotAVideo(stderr_tail(&out.stderr)));
    }
    let report = parse_probe_output(&stdout, &stderr)
        .ok_or_else(|| MediaError::NotAVideo(format!("no video stream in {}", path.display())))?;
    if report.frame_count == 0 {
        return Err(MediaError::ZeroFrames);
    }
    if report.width == 0 || report.height == 0 {
        return Err(MediaError::NotAVideo("zero-sized video stream".into()));
    }
    let duration = report.frame_count as f64 / report.frame_rate.as_f64();
    Ok(VideoAsset {
        id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        source: path.display().to_string(),
        path: path.to_path_buf(),
        width: report.width,
        height: report.height,
        frame_rate: report.frame_rate,
        frame_count: report.frame_count,
        duration,
    })
}

fn drain(mut r: impl Read + Send + 'static) -> JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

/// Streaming decoder yielding every `stride`-th frame.
///
/// Only one frame is buffered at a time. Dropping the stream early kills the
/// transcoder.
pub struct FrameStream {
    child: Child,
    stdout: BufReader<ChildStdout>,
    stderr: Option<JoinHandle<Vec<u8>>>,
    width: u32,
    height: u32,
    stride: u64,
    next_index: u64,
    expected: u64,
    done: bool,
}

impl FrameStream {
    fn fail(&mut self, detail: String) -> Option<Result<Frame, MediaError>> {
        self.done = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
        Some(Err(MediaError::DecodeFailure {
            index: self.next_index,
            detail,
        }))
    }

    fn finish(&mut self) -> Option<Result<Frame, MediaError>> {
        self.done = true;
        let status: io::Result<ExitStatus> = self.child.wait();
        let stderr = self.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        match status {
            Ok(s) if s.success() => {
                if self.next_index < self.expected {
                    Some(Err(MediaError::DecodeFailure {
                        index: self.next_index,
                        detail: "stream ended early".into(),
                    }))
                } else {
                    None
                }
            }
            Ok(s) => Some(Err(MediaError::DecodeFailure {
                index: self.next_index,
                detail: format!("transcoder exited with {:?}: {}", s.code(), stderr_tail(&stderr)),
            })),
            Err(e) => Some(Err(MediaError::DecodeFailure {
                index: self.next_index,
                detail: e.to_string(),
            })),
        }
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame, MediaError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let len = self.width as usize * self.height as usize * 3;
        let mut buf = vec![0u8; len];
        let mut filled = 0;
        while filled < len {
            match self.stdout.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return self.fail(e.to_string()),
            }
        }
        if filled == 0 {
            return self.finish();
        }
        if filled < len {
            return self.fail(format!("truncated frame ({filled} of {len} bytes)"));
        }
        if self.next_index >= self.expected {
            // Transcoder produced more frames than the probe counted.
            return self.fail("more frames than probed".into());
        }
        let frame = Frame::new(self.next_index, self.width, self.height, buf);
        self.next_index += self.stride;
        Some(Ok(frame))
    }
}

impl Drop for FrameStream {
    fn drop(&mut self) {
        if !self.done {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Starts decoding `asset` at the given stride. Frames come out with
/// indices `0, stride, 2*stride, ...`.
pub fn decode_frames(asset: &VideoAsset, stride: u64, cfg: &MediaConfig) -> Result<FrameStream, MediaError> {
    if stride == 0 {
        return Err(MediaError::InvalidRender("stride must be at least 1".into()));
    }
    let input = asset.path.to_string_lossy();
    let stride_s = stride.to_string();
    let args = MediaConfig::expand(&cfg.decode_template, &[("input", &input), ("stride", &stride_s)]);
    debug!(?args, "decode");
    let mut cmd = cfg.command(&args);
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cfg.spawn(&mut cmd)?;
    let stdout = BufReader::with_capacity(1 << 20, child.stdout.take().expect("piped stdout"));
    let stderr = drain(child.stderr.take().expect("piped stderr"));
    Ok(FrameStream {
        child,
        stdout,
        stderr: Some(stderr),
        width: asset.width,
        height: asset.height,
        stride,
        next_index: 0,
        expected: asset.frame_count.div_ceil(stride) * stride,
        done: false,
    })
}

/// Pipes raw RGB24 frames into the transcoder's encode template.
pub struct FrameEncoder {
    child: Child,
    stdin: Option<ChildStdin>,
    stderr: Option<JoinHandle<Vec<u8>>>,
    frame_len: usize,
    written: u64,
}

impl FrameEncoder {
    pub fn start(
        output: &Path,
        width: u32,
        height: u32,
        fps: FrameRate,
        cfg: &MediaConfig,
    ) -> Result<Self, MediaError> {
        if width == 0 || height == 0 {
            return Err(MediaError::InvalidRender("zero output size".into()));
        }
        if let Some(parent) = output.parent() {
            fs::create_dir_all(parent)?;
        }
        let out = output.to_string_lossy();
        let (w, h, r) = (width.to_string(), height.to_string(), fps.to_string());
        let args = MediaConfig::expand(
            &cfg.encode_template,
            &[("output", &out), ("width", &w), ("height", &h), ("fps", &r)],
        );
        debug!(?args, "encode");
        let mut cmd = cfg.command(&args);
        cmd.stdin(Stdio::piped()).stdout(Stdio::null()).stderr(Stdio::piped());
        let mut child = cfg.spawn(&mut cmd)?;
        let stdin = child.stdin.take();
        let stderr = Some(drain(child.stderr.take().expect("piped stderr")));
        Ok(Self {
            child,
            stdin,
            stderr,
            frame_len: width as usize * height as usize * 3,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, rgb: &[u8]) -> Result<(), MediaError> {
        if rgb.len() != self.frame_len {
            return Err(MediaError::InvalidRender(format!(
                "frame has {} bytes, expected {}",
                rgb.len(),
                self.frame_len
            )));
        }
        let stdin = self.stdin.as_mut().expect("encoder already finished");
        if let Err(e) = stdin.write_all(rgb) {
            // A broken pipe means the transcoder died; report its stderr.
            if e.kind() == io::ErrorKind::BrokenPipe {
                return Err(self.collect_failure());
            }
            return Err(e.into());
        }
        self.written += 1;
        Ok(())
    }

    fn collect_failure(&mut self) -> MediaError {
        self.stdin.take();
        let status = self.child.wait().ok();
        let stderr = self.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        MediaError::TranscoderFailure {
            code: status.and_then(|s| s.code()),
            stderr: stderr_tail(&stderr),
        }
    }

    /// Closes stdin and waits for the transcoder. Returns frames written.
    pub fn finish(mut self) -> Result<u64, MediaError> {
        self.stdin.take();
        let status = self.child.wait()?;
        let stderr = self.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        if !status.success() {
            return Err(MediaError::TranscoderFailure {
                code: status.code(),
                stderr: stderr_tail(&stderr),
            });
        }
        Ok(self.written)
    }
}

impl Drop for FrameEncoder {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            self.stdin.take();
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Output size bounds and container choice for rendered summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub max_width: u32,
    pub max_height: u32,
    /// File extension of the produced container; the encode template decides
    /// the actual codec.
    pub extension: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            max_width: 1920,
            max_height: 1920,
            extension: "mp4".into(),
        }
    }
}

impl OutputSpec {
    /// Encoded size for a crop of `w x h` at `target`. Never upscales, keeps
    /// both sides even and derives the short side from the target ratio.
    pub fn output_dims(&self, w: u32, h: u32, target: AspectRatio) -> (u32, u32) {
        let scale = (self.max_width as f64 / w as f64)
            .min(self.max_height as f64 / h as f64)
            .min(1.0);
        if scale >= 1.0 {
            return (w, h);
        }
        let (num, den) = (target.num() as f64, target.den() as f64);
        if w >= h {
            let ow = even_floor(w as f64 * scale).max(2);
            let oh = even_floor(ow as f64 * den / num).clamp(2, self.max_height.max(2));
            (ow, oh)
        } else {
            let oh = even_floor(h as f64 * scale).max(2);
            let ow = even_floor(oh as f64 * num / den).clamp(2, self.max_width.max(2));
            (ow, oh)
        }
    }
}

/// Everything needed to render one summary.
pub struct RenderRequest<'a> {
    pub asset: &'a VideoAsset,
    /// Inclusive `(start, end)` frame ranges, disjoint and chronological.
    pub fragments: &'a [(u64, u64)],
    /// One window per frame of the concatenated fragments.
    pub crops: &'a [CropWindow],
    pub target: AspectRatio,
    pub output_spec: &'a OutputSpec,
    pub output: &'a Path,
}

impl RenderRequest<'_> {
    pub fn validate(&self) -> Result<(), MediaError> {
        if self.fragments.is_empty() {
            return Err(MediaError::EmptySelection);
        }
        let mut prev_end: Option<u64> = None;
        let mut total = 0u64;
        for &(s, e) in self.fragments {
            if s > e || e >= self.asset.frame_count {
                return Err(MediaError::InvalidRender(format!("fragment ({s},{e}) out of range")));
            }
            if prev_end.is_some_and(|p| s <= p) {
                return Err(MediaError::InvalidRender("fragments overlap or are out of order".into()));
            }
            prev_end = Some(e);
            total += e - s + 1;
        }
        if self.crops.len() as u64 != total {
            return Err(MediaError::InvalidRender(format!(
                "{} crop windows for {total} frames",
                self.crops.len()
            )));
        }
        let (w, h) = (self.crops[0].w, self.crops[0].h);
        for c in self.crops {
            if (c.w, c.h) != (w, h) {
                return Err(MediaError::InvalidRender("crop size varies between frames".into()));
            }
            if !c.fits(self.asset.width, self.asset.height) {
                return Err(MediaError::InvalidRender(format!("crop {c:?} exceeds the frame")));
            }
        }
        if !self.target.matches_dims(w, h) {
            return Err(MediaError::InvalidRender(format!(
                "crop {w}x{h} does not match aspect {}",
                self.target
            )));
        }
        Ok(())
    }
}

/// Renders the selected fragments, cropped and scaled, into one file.
/// `progress` receives the fraction of output frames written.
pub fn render_summary(
    req: &RenderRequest<'_>,
    cfg: &MediaConfig,
    mut progress: impl FnMut(f64),
) -> Result<PathBuf, MediaError> {
    req.validate()?;
    let (cw, ch) = (req.crops[0].w, req.crops[0].h);
    let (ow, oh) = req.output_spec.output_dims(cw, ch, req.target);
    let total = req.crops.len() as u64;
    let mut encoder = FrameEncoder::start(req.output, ow, oh, req.asset.frame_rate, cfg)?;

    let last_needed = req.fragments.last().map(|f| f.1).unwrap_or(0);
    let mut frag = req.fragments.iter().peekable();
    let mut crop_iter = req.crops.iter();
    for frame in decode_frames(req.asset, 1, cfg)? {
        let frame = frame?;
        while frag.peek().is_some_and(|f| f.1 < frame.index) {
            frag.next();
        }
        let Some(&&(s, e)) = frag.peek() else { break };
        if frame.index < s || frame.index > e {
            continue;
        }
        let win = crop_iter.next().expect("validated crop count");
        let mut rgb = frame.crop(win);
        if (ow, oh) != (cw, ch) {
            let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
                ImageBuffer::from_raw(cw, ch, rgb).expect("crop buffer size");
            rgb = imageops::resize(&img, ow, oh, imageops::FilterType::Triangle).into_raw();
        }
        encoder.write_frame(&rgb)?;
        progress(encoder.written as f64 / total as f64);
        if frame.index == last_needed {
            break;
        }
    }
    let written = encoder.finish()?;
    if written != total {
        return Err(MediaError::DecodeFailure {
            index: written,
            detail: format!("rendered {written} of {total} frames"),
        });
    }
    Ok(req.output.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FFMPEG_STDERR: &str = "Input #0, mov,mp4,m4a,3gp,3g2,mj2, from 't.mp4':
  Duration: 00:00:00.40, start: 0.000000, bitrate: 37 kb/s
  Stream #0:0[0x1](und): Video: h264 (High) (avc1 / 0x31637661), yuv420p(progressive), 1280x720 [SAR 1:1 DAR 16:9], 18 kb/s, 29.97 fps, 29.97 tbr, 30k tbn (default)
Stream mapping:
  Stream #0:0 -> #0:0 (h264 (native) -> wrapped_avframe (native))
Output #0, null, to 'pipe:':
  Stream #0:0(und): Video: wrapped_avframe, yuv420p(progressive), 1280x720, q=2-31, 200 kb/s, 29.97 fps, 25 tbn (default)
frame=  299 fps=0.0 q=-0.0 Lsize=N/A time=00:00:09.97 bitrate=N/A speed= 276x
";

    #[test]
    fn parses_ffmpeg_probe_output() {
        let stdout = "frame=120\nfps=0.00\nprogress=continue\nframe=300\nprogress=end\n";
        let r = parse_probe_output(stdout, FFMPEG_STDERR).unwrap();
        assert_eq!((r.width, r.height), (1280, 720));
        assert_eq!(r.frame_rate, FrameRate::new(30000, 1001));
        assert_eq!(r.frame_count, 300);
        // without machine progress the stats line is used
        assert_eq!(parse_probe_output("", FFMPEG_STDERR).unwrap().frame_count, 299);
        assert!(parse_probe_output("", "Stream #0:0: Audio: aac").is_none());
    }

    #[test]
    fn frame_rate_decimals() {
        assert_eq!(FrameRate::from_decimal("25"), Some(FrameRate::new(25, 1)));
        assert_eq!(FrameRate::from_decimal("23.98"), Some(FrameRate::new(24000, 1001)));
        assert_eq!(FrameRate::from_decimal("59.94"), Some(FrameRate::new(60000, 1001)));
        assert_eq!(FrameRate::from_decimal("12.5"), Some(FrameRate::new(25, 2)));
        assert_eq!(FrameRate::from_decimal("1k"), Some(FrameRate::new(1000, 1)));
        assert_eq!(FrameRate::from_decimal("0"), None);
        assert_eq!(FrameRate::new(25, 1).frames_in(5.0), 125);
        assert_eq!(FrameRate::new(30000, 1001).frames_in(20.0), 599);
    }

    #[test]
    fn template_expansion_keeps_spaces_in_values() {
        let args = MediaConfig::expand("-i {input} -x {stride}", &[("input", "/a b/c.mp4"), ("stride", "3")]);
        assert_eq!(args, vec!["-i", "/a b/c.mp4", "-x", "3"]);
    }

    #[test]
    fn source_parsing() {
        assert_eq!(Source::parse("https://x.org/v.mp4").unwrap(), Source::Remote("https://x.org/v.mp4".into()));
        assert_eq!(Source::parse("/tmp/v.mp4").unwrap(), Source::Local("/tmp/v.mp4".into()));
        assert_eq!(Source::parse("file:///tmp/v.mp4").unwrap(), Source::Local("/tmp/v.mp4".into()));
        assert!(matches!(Source::parse("rtmp://x/live"), Err(MediaError::UnsupportedSource(_))));
        assert!(matches!(Source::parse("  "), Err(MediaError::UnsupportedSource(_))));
    }

    #[test]
    fn output_dims_never_upscale() {
        let spec = OutputSpec::default();
        let a = AspectRatio::PORTRAIT_9_16;
        assert_eq!(spec.output_dims(606, 1080, a), (606, 1080));
        let small = OutputSpec { max_width: 720, max_height: 720, ..OutputSpec::default() };
        let (w, h) = small.output_dims(606, 1080, a);
        assert_eq!(h, 720);
        assert_eq!(w % 2, 0);
        assert!(a.matches_dims(w, h));
        assert!(w <= 720);
    }

    #[test]
    fn render_rejects_empty_selection() {
        let asset = VideoAsset {
            id: "a".into(),
            source: "a".into(),
            path: "a.mp4".into(),
            width: 64,
            height: 48,
            frame_rate: FrameRate::new(25, 1),
            frame_count: 10,
            duration: 0.4,
        };
        let req = RenderRequest {
            asset: &asset,
            fragments: &[],
            crops: &[],
            target: AspectRatio::new(4, 3).unwrap(),
            output_spec: &OutputSpec::default(),
            output: Path::new("/nonexistent/out.mp4"),
        };
        assert!(matches!(req.validate(), Err(MediaError::EmptySelection)));
        let crops = [CropWindow { x: 0, y: 0, w: 64, h: 48 }; 3];
        let req = RenderRequest { fragments: &[(5, 6), (6, 6)], crops: &crops, ..req };
        assert!(matches!(req.validate(), Err(MediaError::InvalidRender(_))));
    }
}
