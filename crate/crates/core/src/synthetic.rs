//! Deterministic synthetic clips for tests, benchmarks and demos.
//!
//! A clip is a sequence of scenes separated by hard cuts. Each scene has a
//! flat background and optionally a moving disc. An optional watermark
//! encodes the source frame index as horizontal bands at the bottom of the
//! frame, readable from any crop that keeps the full frame height.

use std::path::Path;

use crate::media::{Frame, FrameEncoder, FrameRate, MediaConfig, MediaError};

#[derive(Debug, Clone, PartialEq)]
pub struct Disc {
    pub color: [u8; 3],
    pub radius: f64,
    /// Starting center in pixels.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: u64,
    pub background: [u8; 3],
    pub disc: Option<Disc>,
}

impl Scene {
    pub fn flat(frames: u64, background: [u8; 3]) -> Self {
        Self {
            frames,
            background,
            disc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub width: u32,
    pub height: u32,
    pub fps: FrameRate,
    pub scenes: Vec<Scene>,
    /// Number of watermark bits; 0 disables the watermark.
    pub watermark_bits: u32,
}

pub const WATERMARK_BAND: u32 = 4;

impl SyntheticClip {
    pub fn frame_count(&self) -> u64 {
        self.scenes.iter().map(|s| s.frames).sum()
    }

    /// First frame of every scene after the first.
    pub fn cut_positions(&self) -> Vec<u64> {
        self.scenes
            .iter()
            .scan(0u64, |acc, s| {
                *acc += s.frames;
                Some(*acc)
            })
            .take(self.scenes.len().saturating_sub(1))
            .collect()
    }

    fn scene_at(&self, index: u64) -> (&Scene, u64) {
        let mut start = 0;
        for s in &self.scenes {
            if index < start + s.frames {
                return (s, index - start);
            }
            start += s.frames;
        }
        panic!("frame {index} beyond clip of {} frames", self.frame_count());
    }

    pub fn render_frame(&self, index: u64) -> Frame {
        let (scene, local) = self.scene_at(index);
        let mut frame = Frame::filled(index, self.width, self.height, scene.background);
        if let Some(d) = &scene.disc {
            let cx = d.start.0 + d.velocity.0 * local as f64;
            let cy = d.start.1 + d.velocity.1 * local as f64;
            paint_disc(&mut frame, (cx, cy), d.radius, d.color);
        }
        if self.watermark_bits > 0 {
            stamp_watermark(&mut frame, index, self.watermark_bits);
        }
        frame
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frame_count()).map(|i| self.render_frame(i))
    }

    /// Encodes the clip through the transcoder.
    pub fn write(&self, path: &Path, cfg: &MediaConfig) -> Result<(), MediaError> {
        let mut enc = FrameEncoder::start(path, self.width, self.height, self.fps, cfg)?;
        for f in self.frames() {
            enc.write_frame(&f.pixels)?;
        }
        enc.finish()?;
        Ok(())
    }
}

fn paint_disc(frame: &mut Frame, center: (f64, f64), radius: f64, color: [u8; 3]) {
    let (w, h) = (frame.width as i64, frame.height as i64);
    let r2 = radius * radius;
    let y0 = ((center.1 - radius).floor() as i64).max(0);
    let y1 = ((center.1 + radius).ceil() as i64).min(h - 1);
    let x0 = ((center.0 - radius).floor() as i64).max(0);
    let x1 = ((center.0 + radius).ceil() as i64).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
            if dx * dx + dy * dy <= r2 {
                let i = (y as usize * frame.width as usize + x as usize) * 3;
                frame.pixels[i..i + 3].copy_from_slice(&color);
            }
        }
    }
}

fn stamp_watermark(frame: &mut Frame, index: u64, bits: u32) {
    let top = frame.height - bits * WATERMARK_BAND;
    let row = frame.width as usize * 3;
    for bit in 0..bits {
        let v = if index >> bit & 1 == 1 { 255 } else { 0 };
        let y0 = (top + bit * WATERMARK_BAND) as usize;
        frame.pixels[y0 * row..(y0 + WATERMARK_BAND as usize) * row].fill(v);
    }
}

/// Decodes a watermark from a possibly cropped and rescaled frame whose
/// height spans the full source height.
pub fn read_watermark(frame: &Frame, bits: u32, source_height: u32) -> u64 {
    let scale = frame.height as f64 / source_height as f64;
    let top = (source_height - bits * WATERMARK_BAND) as f64;
    let mut value = 0u64;
    for bit in 0..bits {
        let y = ((top + (bit as f64 + 0.5) * WATERMARK_BAND as f64) * scale) as u32;
        let y = y.min(frame.height - 1);
        let mean: f64 = (0..frame.width)
            .map(|x| {
                let [r, g, b] = frame.rgb(x, y);
                (r as f64 + g as f64 + b as f64) / 3.0
            })
            .sum::<f64>()
            / frame.width as f64;
        if mean > 127.5 {
            value |= 1 << bit;
        }
    }
    value
}

/// A frame holding one Gaussian luminance blob on black.
pub fn gaussian_blob_frame(index: u64, width: u32, height: u32, center: (f64, f64), sigma: f64) -> Frame {
    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 + 0.5 - center.0;
            let dy = y as f64 + 0.5 - center.1;
            let v = (255.0 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()).round() as u8;
            pixels.extend_from_slice(&[v, v, v]);
        }
    }
    Frame::new(index, width, height, pixels)
}

/// Four scenes of distinct brightness, each with a disc moving across it.
pub fn four_scene_clip(width: u32, height: u32, fps: u32, lengths: [u64; 4]) -> SyntheticClip {
    let backgrounds = [[20, 30, 40], [200, 180, 160], [60, 140, 60], [230, 230, 90]];
    let scenes = lengths
        .iter()
        .zip(backgrounds)
        .enumerate()
        .map(|(i, (&frames, background))| Scene {
            frames,
            background,
            disc: Some(Disc {
                color: if i % 2 == 0 { [250, 250, 250] } else { [10, 10, 10] },
                radius: height as f64 / 8.0,
                start: (width as f64 * (0.2 + 0.15 * i as f64), height as f64 * 0.4),
                velocity: (width as f64 / (4.0 * frames as f64), 0.0),
            }),
        })
        .collect();
    SyntheticClip {
        width,
        height,
        fps: FrameRate::new(fps, 1),
        scenes,
        watermark_bits: 12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watermark_round_trip() {
        let clip = four_scene_clip(160, 90, 25, [10, 10, 10, 10]);
        for i in [0, 1, 17, 39] {
            assert_eq!(read_watermark(&clip.render_frame(i), 12, 90), i);
        }
        assert_eq!(clip.cut_positions(), vec![10, 20, 30]);
    }
}
