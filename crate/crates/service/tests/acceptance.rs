//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p clipfit-service --test acceptance`. Exits
//! non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use clipfit_core::crop::{filter_by_clustering, smooth_centers, window_for, CropWindow, FocusPoint, SmoothParams};
use clipfit_core::eval::{fscore, iou, iou_report, CropAnnotationSet};
use clipfit_core::media::{probe, Frame, FrameRate, MediaConfig};
use clipfit_core::pipeline::{crop_frames, run, PipelineInput, PipelineParams, Sidecars, Stage};
use clipfit_core::saliency::SaliencyMap;
use clipfit_core::selection::{select_fragments, ShotValue};
use clipfit_core::shots::{detect_shots, ShotParams};
use clipfit_core::synthetic::{four_scene_clip, gaussian_blob_frame, Disc, Scene, SyntheticClip};
use clipfit_core::{AspectRatio, SummarySpec};
use clipfit_service::{follows_canonical_order, spawn, JobState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_items(rng: &mut StdRng, max_n: usize) -> Vec<ShotValue> {
    let n = rng.gen_range(0..=max_n);
    (0..n)
        .map(|_| ShotValue {
            value: rng.gen_range(0.0..=10.0),
            weight: rng.gen_range(1..=200),
        })
        .collect()
}

/// Best value and the lexicographically smallest index list reaching it.
fn enumerate_knapsack(items: &[ShotValue], budget: u64) -> (f64, Vec<usize>) {
    let n = items.len();
    let mut best = 0.0f64;
    let mut sets: Vec<(f64, Vec<usize>)> = Vec::new();
    for mask in 0u32..1 << n {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let w: u64 = idx.iter().map(|&i| items[i].weight).sum();
        if w > budget {
            continue;
        }
        let v: f64 = idx.iter().map(|&i| items[i].value).sum();
        best = best.max(v);
        sets.push((v, idx));
    }
    let tol = 1e-9;
    let lex = sets
        .into_iter()
        .filter(|(v, _)| *v >= best - tol)
        .map(|(_, s)| s)
        .min()
        .unwrap_or_default();
    (best, lex)
}

fn knapsack_optimality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let instances: Vec<(Vec<ShotValue>, u64)> = (0..200)
        .map(|_| {
            let items = random_items(&mut rng, 15);
            let total: u64 = items.iter().map(|i| i.weight).sum();
            let budget = rng.gen_range(0..=total.max(1));
            (items, budget)
        })
        .collect();
    let started = Instant::now();
    let selections: Vec<_> = instances.iter().map(|(it, b)| select_fragments(it, *b)).collect();
    let elapsed = started.elapsed();
    for ((items, budget), sel) in instances.iter().zip(&selections) {
        let (best, lex) = enumerate_knapsack(items, *budget);
        let got: f64 = sel.selected().iter().map(|&i| items[i].value).sum();
        ensure(got == best || (sel.selected() == lex.as_slice() && (got - best).abs() < 1e-9), || {
            format!("value {got} != oracle {best} (selected {:?}, oracle {lex:?})", sel.selected())
        })?;
        ensure(sel.selected() == lex.as_slice(), || {
            format!("selected {:?}, oracle {lex:?}", sel.selected())
        })?;
    }
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("200/200 match enumeration, solver time {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn feasibility() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    for case in 0..10_000 {
        let items = random_items(&mut rng, 20);
        let total: u64 = items.iter().map(|i| i.weight).sum();
        let budget = rng.gen_range(0..=total + 10);
        let sel = select_fragments(&items, budget);
        let w: u64 = sel.selected().iter().map(|&i| items[i].weight).sum();
        ensure(w <= budget && w == sel.total_frames, || {
            format!("case {case}: weight {w} over budget {budget}")
        })?;
    }
    Ok("10000/10000 within budget".into())
}

fn crop_geometry() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    for case in 0..10_000 {
        let (fw, fh) = (rng.gen_range(32..=4096u32), rng.gen_range(32..=4096u32));
        let aspect = AspectRatio::new(rng.gen_range(1..=21), rng.gen_range(1..=21)).unwrap();
        let center = (
            rng.gen_range(-0.5..1.5) * fw as f64,
            rng.gen_range(-0.5..1.5) * fh as f64,
        );
        let win = window_for(center, fw, fh, aspect).map_err(|e| format!("case {case}: {e}"))?;
        ensure(win.fits(fw, fh), || format!("case {case}: {win:?} outside {fw}x{fh}"))?;
        ensure(win.w % 2 == 0 && win.h % 2 == 0 && win.w > 0 && win.h > 0, || {
            format!("case {case}: odd or empty {win:?}")
        })?;
        ensure(aspect.matches_dims(win.w, win.h), || format!("case {case}: {win:?} is not {aspect}"))?;
        // derived side: floor of the ideal length to an even number
        let ideal_w = win.h as f64 * aspect.as_f64();
        let ideal_h = win.w as f64 / aspect.as_f64();
        ensure(
            (ideal_w - win.w as f64 >= -1e-9 && ideal_w - (win.w as f64) < 2.0)
                || (ideal_h - win.h as f64 >= -1e-9 && ideal_h - (win.h as f64) < 2.0),
            || format!("case {case}: {win:?} more than one rounding step off {aspect}"),
        )?;
    }
    let fixed = window_for((960.0, 540.0), 1920, 1080, AspectRatio::PORTRAIT_9_16).map_err(|e| e.to_string())?;
    let want = CropWindow { x: 657, y: 0, w: 606, h: 1080 };
    ensure(fixed == want, || format!("1920x1080 9:16 centered: {fixed:?}, want {want:?}"))?;
    Ok("10000/10000 valid; 1920x1080 9:16 centered = (657,0,606,1080)".into())
}

fn clustering_oracle_top(values: &[f64], weights: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    let k = k.min(n);
    if k <= 1 {
        return values.to_vec();
    }
    let sse = |a: usize, b: usize| {
        let m: f64 = weights[a..b].iter().sum();
        let mu = values[a..b].iter().zip(&weights[a..b]).map(|(v, w)| v * w).sum::<f64>() / m;
        values[a..b].iter().zip(&weights[a..b]).map(|(v, w)| w * (v - mu).powi(2)).sum::<f64>()
    };
    // every way of cutting the sorted values into k contiguous groups
    let mut best = (f64::INFINITY, n);
    let mut cuts: Vec<usize> = (0..=k).map(|j| if j == k { n } else { j }).collect();
    loop {
        let cost: f64 = (0..k).map(|g| sse(cuts[g], cuts[g + 1])).sum();
        if cost < best.0 - 1e-12 {
            best = (cost, cuts[k - 1]);
        }
        let mut j = k - 1;
        while j >= 1 && cuts[j] == n - (k - j) {
            j -= 1;
        }
        if j == 0 {
            break;
        }
        cuts[j] += 1;
        for i in j + 1..k {
            cuts[i] = cuts[i - 1] + 1;
        }
    }
    values[best.1..].to_vec()
}

fn clustering_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    for case in 0..500 {
        let distinct = rng.gen_range(1..=6usize);
        let palette: Vec<f32> = (0..distinct).map(|_| rng.gen_range(0..=255u8) as f32 / 255.0).collect();
        let (w, h) = (rng.gen_range(4..=32u32), rng.gen_range(4..=32u32));
        let skew: Vec<f64> = (0..distinct).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = skew.iter().sum();
        let data: Vec<f32> = (0..w * h)
            .map(|_| {
                let mut r = rng.gen_range(0.0..total);
                for (i, s) in skew.iter().enumerate() {
                    if r < *s {
                        return palette[i];
                    }
                    r -= s;
                }
                palette[distinct - 1]
            })
            .collect();
        let map = SaliencyMap::new(w, h, data);

        let mut sorted = map.data().to_vec();
        sorted.sort_by(f32::total_cmp);
        let mut hist: Vec<(f64, f64)> = Vec::new();
        for v in sorted {
            match hist.last_mut() {
                Some((p, c)) if *p == v as f64 => *c += 1.0,
                _ => hist.push((v as f64, 1.0)),
            }
        }
        let values: Vec<f64> = hist.iter().map(|h| h.0).collect();
        let weights: Vec<f64> = hist.iter().map(|h| h.1).collect();
        let mut want = clustering_oracle_top(&values, &weights, 3);
        want.retain(|&v| v != 0.0);

        let filtered = filter_by_clustering(&map, 3);
        let mut got: Vec<f64> = filtered.map.data().iter().filter(|&&v| v != 0.0).map(|&v| v as f64).collect();
        got.sort_by(f64::total_cmp);
        got.dedup();
        ensure(got == want, || format!("map {case}: retained {got:?}, oracle {want:?}"))?;
    }
    Ok("500/500 retained clusters match".into())
}

fn centered_gaussian() -> Outcome {
    let (w, h) = (640u32, 360u32);
    let frames: Vec<Frame> = (0..25)
        .map(|i| gaussian_blob_frame(i, w, h, (w as f64 / 2.0, h as f64 / 2.0), 30.0))
        .collect();
    let mut worst = f64::INFINITY;
    for aspect in [
        AspectRatio::PORTRAIT_9_16,
        AspectRatio::new(1, 1).unwrap(),
        AspectRatio::new(4, 5).unwrap(),
    ] {
        let ideal = window_for(((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0), w, h, aspect).map_err(|e| e.to_string())?;
        let wins = crop_frames(&frames, &[0], aspect, &PipelineParams::default()).map_err(|e| e.to_string())?;
        ensure(wins.len() == frames.len(), || format!("{} windows for {} frames", wins.len(), frames.len()))?;
        for (t, win) in wins.iter().enumerate() {
            let v = iou(win, &ideal);
            worst = worst.min(v);
            ensure(v >= 0.99, || format!("{aspect} frame {t}: {win:?} vs {ideal:?}, IoU {v:.4}"))?;
        }
    }
    Ok(format!("min per-frame IoU {worst:.4} over 9:16, 1:1, 4:5"))
}

fn jitter() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let params = SmoothParams::default();
    let tv = |pts: &[(f64, f64)]| -> f64 {
        pts.windows(2).map(|p| (p[1].0 - p[0].0).abs() + (p[1].1 - p[0].1).abs()).sum()
    };
    for walk in 0..100 {
        let mut pos = (rng.gen_range(0.0..1920.0), rng.gen_range(0.0..1080.0));
        let raw: Vec<FocusPoint> = (0..rng.gen_range(2..300))
            .map(|_| {
                pos.0 += rng.gen_range(-40.0..40.0);
                pos.1 += rng.gen_range(-40.0..40.0);
                FocusPoint { x: pos.0, y: pos.1, confidence: 1.0 }
            })
            .collect();
        let raw_xy: Vec<(f64, f64)> = raw.iter().map(|p| (p.x, p.y)).collect();
        let smooth = smooth_centers(&raw, &[0], params);
        ensure(tv(&smooth) <= tv(&raw_xy) + 1e-9, || {
            format!("walk {walk}: smoothed TV {} > raw {}", tv(&smooth), tv(&raw_xy))
        })?;
    }
    // a unit step at t: after k more frames the EMA sits at 1 - (1 - alpha)^(k + 1)
    let t = 10;
    let step: Vec<FocusPoint> = (0..20)
        .map(|i| FocusPoint { x: if i < t { 0.0 } else { 1.0 }, y: 0.0, confidence: 1.0 })
        .collect();
    let out = smooth_centers(&step, &[0], params);
    let want = 1.0 - (1.0 - params.alpha).powi(3);
    let got = out[t + 2].0;
    ensure((got - want).abs() <= 1e-9, || format!("step response at t+2: {got}, closed form {want}"))?;
    Ok(format!("TV never increased on 100 walks; step at t+2 = {got:.9} (alpha {})", params.alpha))
}

fn metrics() -> Outcome {
    let n = 200;
    let machine: Vec<bool> = (0..n).map(|i| i < 50).collect();
    let user: Vec<bool> = (0..n).map(|i| (30..70).contains(&i)).collect();
    let f = fscore(&machine, &user).map_err(|e| e.to_string())?.f1;
    ensure((f - 0.4444).abs() <= 1e-4, || format!("F = {f}"))?;

    let a = CropWindow { x: 0, y: 0, w: 100, h: 100 };
    let b = CropWindow { x: 50, y: 0, w: 100, h: 100 };
    let v = iou(&a, &b);
    ensure((v - 1.0 / 3.0).abs() <= 1e-9, || format!("half-overlap IoU = {v}"))?;

    let mut rng = StdRng::seed_from_u64(7);
    let rand_win = |rng: &mut StdRng| {
        let (w, h) = (rng.gen_range(2..=400), rng.gen_range(2..=400));
        CropWindow { x: rng.gen_range(0..=640 - w), y: rng.gen_range(0..=480 - h), w, h }
    };
    for set in 0..100 {
        let frames = rng.gen_range(1..50);
        let annotators = rng.gen_range(1..6);
        let machine: Vec<CropWindow> = (0..frames).map(|_| rand_win(&mut rng)).collect();
        let gt: Vec<Vec<CropWindow>> = (0..frames)
            .map(|_| (0..annotators).map(|_| rand_win(&mut rng)).collect())
            .collect();
        let r = iou_report(&machine, &CropAnnotationSet::new(gt).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(r.worst <= r.mean + 1e-12 && r.mean <= r.best + 1e-12, || format!("set {set}: {r:?}"))?;
    }
    Ok(format!("F = {f:.4}; IoU = {v:.9}; worst <= mean <= best on 100 sets"))
}

fn shot_detector() -> Outcome {
    let scene = |bg: [u8; 3], disc: [u8; 3], x: f64| Scene {
        frames: 80,
        background: bg,
        disc: Some(Disc { color: disc, radius: 20.0, start: (x, 60.0), velocity: (1.5, 0.3) }),
    };
    let clip = SyntheticClip {
        width: 240,
        height: 135,
        fps: FrameRate::new(25, 1),
        scenes: vec![
            scene([30, 30, 60], [240, 200, 40], 40.0),
            scene([190, 190, 170], [20, 20, 20], 60.0),
            scene([80, 150, 80], [250, 250, 250], 30.0),
        ],
        watermark_bits: 0,
    };
    let frames: Vec<Frame> = clip.frames().collect();
    let shots = detect_shots(&frames, ShotParams::default());
    let cuts: Vec<u64> = shots.iter().skip(1).map(|s| s.start_frame).collect();
    ensure(
        cuts.len() == 2 && cuts[0].abs_diff(80) <= 1 && cuts[1].abs_diff(160) <= 1,
        || format!("cuts {cuts:?}, want [80, 160]"),
    )?;
    let flat: Vec<Frame> = (0..120).map(|i| Frame::filled(i, 64, 36, [90, 90, 90])).collect();
    let n = detect_shots(&flat, ShotParams::default()).len();
    ensure(n == 1, || format!("constant clip gave {n} shots"))?;
    Ok(format!("cuts {cuts:?}; constant clip 1 shot"))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = dir.path().join("source.mp4");
    four_scene_clip(640, 360, 25, [110, 140, 120, 130])
        .write(&src, &MediaConfig::default())
        .map_err(|e| e.to_string())?;
    let input = PipelineInput {
        source: src.to_string_lossy().into_owned(),
        spec: SummarySpec::custom(5.0, AspectRatio::PORTRAIT_9_16).map_err(|e| e.to_string())?,
        sidecars: Sidecars::default(),
        work_dir: dir.path().to_path_buf(),
        output: None,
    };
    let started = Instant::now();
    let out = run(&input, &PipelineParams::default(), &MediaConfig::default(), &mut |_: Stage, _: f64| true)
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let rendered = probe(&out.output_path, &MediaConfig::default()).map_err(|e| e.to_string())?;
    let limit = 5.0 + 1.0 / 25.0;
    ensure(rendered.duration <= limit + 1e-9, || format!("duration {} > {limit}", rendered.duration))?;
    ensure(rendered.width % 2 == 0 && rendered.height % 2 == 0, || {
        format!("odd output {}x{}", rendered.width, rendered.height)
    })?;
    ensure(AspectRatio::PORTRAIT_9_16.matches_dims(rendered.width, rendered.height), || {
        format!("{}x{} is not 9:16", rendered.width, rendered.height)
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{:.2} s at {}x{} in {:.1} s",
        rendered.duration,
        rendered.width,
        rendered.height,
        elapsed.as_secs_f64()
    ))
}

fn service() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let mut cfg = common::config(&data);
    cfg.workers = 2;
    let mut ids = Vec::new();
    let mut docs = Vec::new();
    {
        let svc = spawn(cfg.clone()).map_err(|e| e.to_string())?;
        let http = common::Http::new(svc.base_url());
        for (i, tint) in [20u8, 80, 140, 200].into_iter().enumerate() {
            let clip = common::tinted_clip(256, 144, &[40, 45, 50, 55], tint);
            let src = common::write_clip(&clip, dir.path(), &format!("clip-{i}.mp4"));
            ids.push(http.submit_local(&src, 4.0, "9:16"));
        }
        for id in &ids {
            let st = http.wait_terminal(id, Duration::from_secs(180));
            ensure(st["state"] == "done", || format!("job {id}: {st}"))?;
            let states: Vec<JobState> = st["history"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| serde_json::from_value(t["state"].clone()).unwrap())
                .collect();
            ensure(follows_canonical_order(&states), || format!("job {id}: {states:?}"))?;
            docs.push(http.get(&format!("/api/v1/jobs/{id}/result")).1);
        }
        svc.shutdown().map_err(|e| e.to_string())?;
    }
    let svc = spawn(cfg).map_err(|e| e.to_string())?;
    let http = common::Http::new(svc.base_url());
    for (id, doc) in ids.iter().zip(&docs) {
        let (code, st) = http.get(&format!("/api/v1/jobs/{id}"));
        ensure(code == 200 && st["state"] == "done", || format!("after restart {id}: {code} {st}"))?;
        let (code, again) = http.get(&format!("/api/v1/jobs/{id}/result"));
        ensure(code == 200 && &again == doc, || format!("after restart {id}: result changed"))?;
    }
    Ok("4/4 done in canonical order; results intact after restart".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("knapsack optimality", knapsack_optimality),
        ("feasibility", feasibility),
        ("crop geometry", crop_geometry),
        ("clustering oracle", clustering_oracle),
        ("centered gaussian fidelity", centered_gaussian),
        ("jitter", jitter),
        ("metrics", metrics),
        ("shot detector", shot_detector),
        ("end-to-end", end_to_end),
        ("service", service),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
