//! Per-frame saliency maps.
//!
//! Maps come either from an external predictor (SALM binary file or a
//! directory of numbered grayscale PNGs) or from the built-in spectral
//! residual detector.
//!
//! SALM layout, little-endian:
//!
//! ```text
//! b"SALM" | u32 frame_count | u32 width | u32 height | frame_count*width*height u8
//! ```
//!
//! Payload is frame-major, row-major within a frame; byte `b` maps to
//! intensity `b / 255`.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::media::Frame;

pub const DEFAULT_MAP_SIZE: u32 = 64;
const SALM_MAGIC: &[u8; 4] = b"SALM";
const SALM_HEADER: u64 = 16;

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("cannot read saliency data: {0}")]
    Io(#[from] io::Error),
    #[error("malformed saliency data: {0}")]
    Parse(String),
    #[error("expected {expected} saliency maps, found {found}")]
    CountMismatch { expected: u64, found: u64 },
    #[error("saliency map index {0} out of range")]
    OutOfRange(u64),
}

/// Row-major attention intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl SaliencyMap {
    /// # Panics
    /// On zero dimensions, a length mismatch, or values outside `[0, 1]`.
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert!(width > 0 && height > 0, "saliency map must be non-empty");
        assert_eq!(data.len(), width as usize * height as usize);
        assert!(
            data.iter().all(|v| (0.0..=1.0).contains(v)),
            "saliency intensities must lie in [0, 1]"
        );
        Self { width, height, data }
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![0.0; width as usize * height as usize])
    }

    pub fn from_u8(width: u32, height: u32, bytes: &[u8]) -> Self {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Position of the first maximum, `(x, y)`.
    pub fn argmax(&self) -> (u32, u32) {
        let (i, _) = self
            .data
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i as u32 % self.width, i as u32 / self.width)
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }
}

/// Random access to imported saliency maps.
pub trait SaliencySource {
    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn map(&mut self, index: u64) -> Result<SaliencyMap, SaliencyError>;
}

/// Lazily reads maps out of a SALM file.
pub struct SalmReader {
    file: BufReader<File>,
    count: u64,
    width: u32,
    height: u32,
}

impl SalmReader {
    pub fn open(path: &Path) -> Result<Self, SaliencyError> {
        let mut file = BufReader::new(File::open(path)?);
        let mut header = [0u8; SALM_HEADER as usize];
        file.read_exact(&mut header)
            .map_err(|_| SaliencyError::Parse("file shorter than the SALM header".into()))?;
        if &header[..4] != SALM_MAGIC {
            return Err(SaliencyError::Parse("missing SALM magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (count, width, height) = (word(4) as u64, word(8), word(12));
        if width == 0 || height == 0 {
            return Err(SaliencyError::Parse("zero map dimensions".into()));
        }
        let len = file.get_ref().metadata()?.len();
        let want = SALM_HEADER + count * width as u64 * height as u64;
        if len != want {
            return Err(SaliencyError::Parse(format!(
                "payload is {} bytes, header implies {}",
                len - SALM_HEADER,
                want - SALM_HEADER
            )));
        }
        Ok(Self {
            file,
            count,
            width,
            height,
        })
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

impl SaliencySource for SalmReader {
    fn len(&self) -> u64 {
        self.count
    }

    fn map(&mut self, index: u64) -> Result<SaliencyMap, SaliencyError> {
        if index >= self.count {
            return Err(SaliencyError::OutOfRange(index));
        }
        let size = self.width as usize * self.height as usize;
        self.file
            .seek(SeekFrom::Start(SALM_HEADER + index * size as u64))?;
        let mut buf = vec![0u8; size];
        self.file.read_exact(&mut buf)?;
        Ok(SaliencyMap::from_u8(self.width, self.height, &buf))
    }
}

/// Directory of zero-padded numbered grayscale PNGs, e.g. `000001.png`.
/// Files are ordered by the number in their stem.
pub struct PngDirSource {
    files: Vec<PathBuf>,
}

impl PngDirSource {
    pub fn open(dir: &Path) -> Result<Self, SaliencyError> {
        let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let is_png = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            let number = path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(|s| s.trim_start_matches(|c: char| !c.is_ascii_digit()))
                .and_then(|s| s.parse::<u64>().ok());
            if let (true, Some(n)) = (is_png, number) {
                numbered.push((n, path));
            }
        }
        numbered.sort();
        Ok(Self {
            files: numbered.into_iter().map(|(_, p)| p).collect(),
        })
    }
}

impl SaliencySource for PngDirSource {
    fn len(&self) -> u64 {
        self.files.len() as u64
    }

    fn map(&mut self, index: u64) -> Result<SaliencyMap, SaliencyError> {
        let path = self
            .files
            .get(index as usize)
            .ok_or(SaliencyError::OutOfRange(index))?;
        let img = image::open(path)
            .map_err(|e| SaliencyError::Parse(format!("{}: {e}", path.display())))?
            .into_luma8();
        let (w, h) = img.dimensions();
        if w == 0 || h == 0 {
            return Err(SaliencyError::Parse(format!("{} is empty", path.display())));
        }
        Ok(SaliencyMap::from_u8(w, h, img.as_raw()))
    }
}

/// Opens a SALM file or a PNG directory, checking it holds exactly
/// `expected_frames` maps.
pub fn open_saliency(path: &Path, expected_frames: u64) -> Result<Box<dyn SaliencySource + Send>, SaliencyError> {
    let source: Box<dyn SaliencySource + Send> = if path.is_dir() {
        Box::new(PngDirSource::open(path)?)
    } else {
        Box::new(SalmReader::open(path)?)
    };
    if source.len() != expected_frames {
        return Err(SaliencyError::CountMismatch {
            expected: expected_frames,
            found: source.len(),
        });
    }
    Ok(source)
}

/// Loads every map at once.
pub fn import_saliency(path: &Path, expected_frames: u64) -> Result<Vec<SaliencyMap>, SaliencyError> {
    let mut src = open_saliency(path, expected_frames)?;
    (0..expected_frames).map(|i| src.map(i)).collect()
}

/// Writes maps as SALM. All maps must share dimensions.
pub fn write_salm(path: &Path, maps: &[SaliencyMap]) -> Result<(), SaliencyError> {
    let (w, h) = maps.first().map_or((1, 1), |m| (m.width, m.height));
    if maps.iter().any(|m| (m.width, m.height) != (w, h)) {
        return Err(SaliencyError::Parse("maps differ in size".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(SALM_MAGIC)?;
    for v in [maps.len() as u32, w, h] {
        out.write_all(&v.to_le_bytes())?;
    }
    for m in maps {
        out.write_all(&m.to_u8())?;
    }
    out.flush()?;
    Ok(())
}

/// Area-averaged luma thumbnail of `map_w x map_h`.
pub fn downscale_luma(frame: &Frame, map_w: u32, map_h: u32) -> Vec<f64> {
    let (fw, fh) = (frame.width as usize, frame.height as usize);
    let luma = frame.luma();
    let (mw, mh) = (map_w as usize, map_h as usize);
    let mut out = vec![0.0; mw * mh];
    for my in 0..mh {
        let y0 = my * fh / mh;
        let y1 = ((my + 1) * fh / mh).max(y0 + 1).min(fh);
        for mx in 0..mw {
            let x0 = mx * fw / mw;
            let x1 = ((mx + 1) * fw / mw).max(x0 + 1).min(fw);
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += luma[y * fw + x0..y * fw + x1].iter().map(|&v| v as f64).sum::<f64>();
            }
            out[my * mw + mx] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    if inverse {
        let n = (w * h) as f64;
        data.iter_mut().for_each(|c| *c /= n);
    }
}

/// 3x3 mean with wrap-around edges (the spectrum is periodic).
pub(crate) fn box3_wrap(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    s += src[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}

/// 3x3 binomial blur (1-2-1 separable kernel) with replicated edges.
pub(crate) fn gauss3_clamp(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        src[y * w + x]
    };
    let mut out = vec![0.0; src.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for (j, ky) in K.iter().enumerate() {
                for (i, kx) in K.iter().enumerate() {
                    s += ky * kx * at(x + i as isize - 1, y + j as isize - 1);
                }
            }
            out[y as usize * w + x as usize] = s;
        }
    }
    out
}

pub(crate) fn normalize_to_map(values: &[f64], w: u32, h: u32) -> SaliencyMap {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // also catches NaN and empty input
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return SaliencyMap::zeros(w, h);
    }
    let data = values
        .iter()
        .map(|v| (((v - lo) / (hi - lo)) as f32).clamp(0.0, 1.0))
        .collect();
    SaliencyMap::new(w, h, data)
}

/// Spectral residual saliency over a luma thumbnail that is already at map
/// resolution.
pub fn spectral_residual_luma(luma: &[f64], map_w: u32, map_h: u32) -> SaliencyMap {
    let (w, h) = (map_w as usize, map_h as usize);
    assert_eq!(luma.len(), w * h);
    let (lo, hi) = luma
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // A flat image has no residual structure, only floating-point noise.
    if hi - lo < 1e-9 {
        return SaliencyMap::zeros(map_w, map_h);
    }

    let mut spec: Vec<Complex64> = luma.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spec, w, h, false);
    // log(1 + |F|): exact spectral nulls (e.g. from a sharp-edged box) would
    // otherwise dominate the residual with huge values at arbitrary phase
    let log_amp: Vec<f64> = spec.iter().map(|c| c.norm().ln_1p()).collect();
    let smooth = box3_wrap(&log_amp, w, h);
    for ((c, la), sm) in spec.iter_mut().zip(&log_amp).zip(&smooth) {
        let phase = c.arg();
        *c = Complex64::from_polar((la - sm).exp(), phase);
    }
    fft2(&mut spec, w, h, true);
    let energy: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    normalize_to_map(&gauss3_clamp(&energy, w, h), map_w, map_h)
}

/// Built-in saliency: grayscale downscale, then spectral residual.
pub fn spectral_residual(frame: &Frame, map_w: u32, map_h: u32) -> SaliencyMap {
    spectral_residual_luma(&downscale_luma(frame, map_w, map_h), map_w, map_h)
}
