//! Built-in analysis stages on synthetic frames: shot cuts, spectral
//! residual saliency against a direct DFT, and the spatial crop chain.

use std::f64::consts::PI;

use clipfit_core::crop::{window_for, CropWindow};
use clipfit_core::eval::iou;
use clipfit_core::media::{Frame, FrameRate};
use clipfit_core::pipeline::{crop_frames, PipelineParams};
use clipfit_core::saliency::{spectral_residual, spectral_residual_luma};
use clipfit_core::shots::{detect_shots, ShotParams};
use clipfit_core::synthetic::{gaussian_blob_frame, Disc, Scene, SyntheticClip};
use clipfit_core::AspectRatio;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Clone, Copy)]
struct C(f64, f64);

fn dft2(src: &[C], w: usize, h: usize, inverse: bool) -> Vec<C> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![C(0.0, 0.0); w * h];
    for v in 0..h {
        for u in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = sign * 2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    let C(sr, si) = src[y * w + x];
                    re += sr * a.cos() - si * a.sin();
                    im += sr * a.sin() + si * a.cos();
                }
            }
            let n = if inverse { (w * h) as f64 } else { 1.0 };
            out[v * w + u] = C(re / n, im / n);
        }
    }
    out
}

/// Straight-line restatement of the spectral residual chain.
fn reference_saliency(luma: &[f64], w: usize, h: usize) -> Vec<f64> {
    let spec = dft2(&luma.iter().map(|&v| C(v, 0.0)).collect::<Vec<_>>(), w, h, false);
    let la: Vec<f64> = spec.iter().map(|c| c.0.hypot(c.1).ln_1p()).collect();
    let mut resid = vec![C(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [-1i64, 0, 1] {
                for dx in [-1i64, 0, 1] {
                    let yy = (y as i64 + dy).rem_euclid(h as i64) as usize;
                    let xx = (x as i64 + dx).rem_euclid(w as i64) as usize;
                    s += la[yy * w + xx];
                }
            }
            let r = (la[y * w + x] - s / 9.0).exp();
            let C(re, im) = spec[y * w + x];
            let ph = im.atan2(re);
            resid[y * w + x] = C(r * ph.cos(), r * ph.sin());
        }
    }
    let back = dft2(&resid, w, h, true);
    let energy: Vec<f64> = back.iter().map(|c| c.0 * c.0 + c.1 * c.1).collect();
    let k = [0.25, 0.5, 0.25];
    let mut blur = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, ky) in k.iter().enumerate() {
                for (i, kx) in k.iter().enumerate() {
                    let yy = (y as i64 + j as i64 - 1).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + i as i64 - 1).clamp(0, w as i64 - 1) as usize;
                    s += ky * kx * energy[yy * w + xx];
                }
            }
            blur[y * w + x] = s;
        }
    }
    let lo = blur.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = blur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    blur.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[test]
fn spectral_residual_matches_direct_dft() {
    let mut rng = StdRng::seed_from_u64(7);
    for (w, h) in [(16, 16), (12, 10), (9, 7)] {
        let luma: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect();
        let got = spectral_residual_luma(&luma, w as u32, h as u32);
        let want = reference_saliency(&luma, w, h);
        for (g, r) in got.data().iter().zip(&want) {
            assert!((*g as f64 - r).abs() < 1e-5, "{w}x{h}: {g} vs {r}");
        }
    }
}

fn square_frame(x0: u32, y0: u32) -> Frame {
    let mut f = Frame::filled(0, 64, 64, [0, 0, 0]);
    for y in y0..y0 + 8 {
        for x in x0..x0 + 8 {
            let i = (y as usize * 64 + x as usize) * 3;
            f.pixels[i..i + 3].copy_from_slice(&[255, 255, 255]);
        }
    }
    f
}

#[test]
fn square_blob_argmax_inside_dilated_box() {
    for (x0, y0) in [(20u32, 24u32), (4, 4), (50, 10), (28, 40), (52, 52), (0, 0), (56, 56), (13, 37)] {
        let (ax, ay) = spectral_residual(&square_frame(x0, y0), 64, 64).argmax();
        assert!(
            ax + 2 >= x0 && ax <= x0 + 7 + 2 && ay + 2 >= y0 && ay <= y0 + 7 + 2,
            "blob at ({x0},{y0}), argmax ({ax},{ay})"
        );
    }
}

#[test]
fn argmax_follows_a_shifted_blob() {
    // a square's four corners tie for the peak, so shift a round blob instead
    let at = |c: (f64, f64)| spectral_residual(&gaussian_blob_frame(0, 64, 64, c, 2.0), 64, 64).argmax();
    let base = (20.0, 24.0);
    let (bx, by) = at(base);
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..100 {
        let c = (rng.gen_range(4.0..60.0f64).round(), rng.gen_range(4.0..60.0f64).round());
        let (ax, ay) = at(c);
        let (dx, dy) = (c.0 - base.0, c.1 - base.1);
        assert!((ax as f64 - bx as f64 - dx).abs() <= 2.0, "{c:?}: ({ax},{ay})");
        assert!((ay as f64 - by as f64 - dy).abs() <= 2.0, "{c:?}: ({ax},{ay})");
    }
}

fn three_scenes() -> SyntheticClip {
    let scene = |bg: [u8; 3], disc: [u8; 3], x: f64| Scene {
        frames: 80,
        background: bg,
        disc: Some(Disc { color: disc, radius: 20.0, start: (x, 60.0), velocity: (1.5, 0.3) }),
    };
    SyntheticClip {
        width: 240,
        height: 135,
        fps: FrameRate::new(25, 1),
        scenes: vec![
            scene([30, 30, 60], [240, 200, 40], 40.0),
            scene([190, 190, 170], [20, 20, 20], 60.0),
            scene([80, 150, 80], [250, 250, 250], 30.0),
        ],
        watermark_bits: 0,
    }
}

#[test]
fn three_scene_cuts_are_found() {
    let clip = three_scenes();
    let frames: Vec<Frame> = clip.frames().collect();
    let shots = detect_shots(&frames, ShotParams::default());
    let cuts: Vec<u64> = shots.iter().skip(1).map(|s| s.start_frame).collect();
    assert_eq!(cuts.len(), 2, "{shots:?}");
    for (c, want) in cuts.iter().zip([80u64, 160]) {
        assert!(c.abs_diff(want) <= 1, "cut {c}, want {want}");
    }
    assert_eq!(detect_shots(&frames, ShotParams::default()), shots);
}

#[test]
fn constant_clip_is_a_single_shot() {
    let frames: Vec<Frame> = (0..60).map(|i| Frame::filled(i, 32, 18, [120, 40, 200])).collect();
    let shots = detect_shots(&frames, ShotParams::default());
    assert_eq!(shots.len(), 1);
    assert_eq!((shots[0].start_frame, shots[0].end_frame), (0, 59));
}

#[test]
fn centered_blob_gives_center_crop() {
    let (w, h) = (640, 360);
    let frames: Vec<Frame> = (0..12)
        .map(|i| gaussian_blob_frame(i, w, h, (w as f64 / 2.0, h as f64 / 2.0), 30.0))
        .collect();
    for aspect in [AspectRatio::PORTRAIT_9_16, AspectRatio::new(1, 1).unwrap(), AspectRatio::new(4, 5).unwrap()] {
        let ideal = window_for(((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0), w, h, aspect).unwrap();
        let wins: Vec<CropWindow> = crop_frames(&frames, &[0], aspect, &PipelineParams::default()).unwrap();
        assert_eq!(wins.len(), frames.len());
        for win in wins {
            assert!(iou(&win, &ideal) >= 0.99, "{aspect}: {win:?} vs {ideal:?}");
        }
    }
}
