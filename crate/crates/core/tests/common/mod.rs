#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gazenet::data::{SCREEN_HEIGHT, SCREEN_WIDTH};

/// Monte-Carlo mean distance from uniform points on the screen to its
/// centroid: the MAE of a predictor that always outputs the centre.
pub fn chance_baseline(draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy) = (SCREEN_WIDTH / 2.0, SCREEN_HEIGHT / 2.0);
    let mut sum = 0.0;
    for _ in 0..draws {
        let x: f64 = rng.random_range(0.0..SCREEN_WIDTH);
        let y: f64 = rng.random_range(0.0..SCREEN_HEIGHT);
        sum += (x - cx).hypot(y - cy);
    }
    sum / draws as f64
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_gazenet"))
}
