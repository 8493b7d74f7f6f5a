//! Seeded inputs shared by the benchmarks.

use clipfit_core::media::Frame;
use clipfit_core::saliency::SaliencyMap;
use clipfit_core::selection::ShotValue;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `n` shots of 1-200 frames with values in [0, 10].
pub fn knapsack_items(n: usize, seed: u64) -> Vec<ShotValue> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| ShotValue {
            value: rng.gen_range(0.0..=10.0),
            weight: rng.gen_range(1..=200),
        })
        .collect()
}

/// A frame of random noise.
pub fn noise_frame(width: u32, height: u32, seed: u64) -> Frame {
    let mut rng = StdRng::seed_from_u64(seed);
    let pixels = (0..width as usize * height as usize * 3).map(|_| rng.gen()).collect();
    Frame::new(0, width, height, pixels)
}

/// A saliency map with values drawn from 256 levels.
pub fn random_map(size: u32, seed: u64) -> SaliencyMap {
    let mut rng = StdRng::seed_from_u64(seed);
    let data = (0..size * size).map(|_| rng.gen_range(0..=255u8) as f32 / 255.0).collect();
    SaliencyMap::new(size, size, data)
}
