use clipfit_core::crop::filter_by_clustering;
use clipfit_core::saliency::SaliencyMap;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Retained (top) group of the best contiguous partition of sorted distinct
/// values into `k` non-empty groups, by weighted within-group squared error.
fn oracle_top(values: &[f64], weights: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    let k = k.min(n);
    let sse = |a: usize, b: usize| {
        let m: f64 = weights[a..b].iter().sum();
        let mu = values[a..b].iter().zip(&weights[a..b]).map(|(v, w)| v * w).sum::<f64>() / m;
        values[a..b].iter().zip(&weights[a..b]).map(|(v, w)| w * (v - mu).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, n);
    let mut cuts = vec![0usize; k + 1];
    cuts[k] = n;
    fn rec(
        j: usize,
        k: usize,
        n: usize,
        cuts: &mut Vec<usize>,
        sse: &dyn Fn(usize, usize) -> f64,
        best: &mut (f64, usize),
    ) {
        if j == k {
            let cost: f64 = (0..k).map(|g| sse(cuts[g], cuts[g + 1])).sum();
            if cost < best.0 - 1e-12 {
                *best = (cost, cuts[k - 1]);
            }
            return;
        }
        for c in cuts[j - 1] + 1..=n - (k - j) {
            cuts[j] = c;
            rec(j + 1, k, n, cuts, sse, best);
        }
    }
    if k == 1 {
        return values.to_vec();
    }
    rec(1, k, n, &mut cuts, &sse, &mut best);
    values[best.1..].to_vec()
}

fn random_map(rng: &mut StdRng) -> SaliencyMap {
    let distinct = rng.gen_range(1..=6);
    let palette: Vec<f32> = (0..distinct).map(|_| rng.gen_range(0..=255u8) as f32 / 255.0).collect();
    let (w, h) = (rng.gen_range(4..=32), rng.gen_range(4..=32));
    let skew: Vec<f64> = (0..distinct).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = skew.iter().sum();
    let data = (0..w * h)
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
    SaliencyMap::new(w as u32, h as u32, data)
}

#[test]
fn retained_cluster_matches_exhaustive_oracle() {
    let mut rng = StdRng::seed_from_u64(0x5a11e);
    let mut mismatches = 0;
    for _ in 0..500 {
        let map = random_map(&mut rng);
        let mut hist: Vec<(f32, f64)> = Vec::new();
        let mut sorted = map.data().to_vec();
        sorted.sort_by(f32::total_cmp);
        for v in sorted {
            match hist.last_mut() {
                Some((p, c)) if *p == v => *c += 1.0,
                _ => hist.push((v, 1.0)),
            }
        }
        let values: Vec<f64> = hist.iter().map(|h| h.0 as f64).collect();
        let weights: Vec<f64> = hist.iter().map(|h| h.1).collect();
        let mut want = oracle_top(&values, &weights, 3);
        if want.iter().all(|&v| v == 0.0) {
            want.clear();
        }
        let filtered = filter_by_clustering(&map, 3);
        let mut got: Vec<f64> = filtered.map.data().iter().filter(|&&v| v != 0.0).map(|&v| v as f64).collect();
        got.sort_by(f64::total_cmp);
        got.dedup();
        want.retain(|&v| v != 0.0);
        if got != want {
            mismatches += 1;
            eprintln!("values {values:?} weights {weights:?}: got {got:?}, want {want:?}");
        }
    }
    assert_eq!(mismatches, 0);
}

