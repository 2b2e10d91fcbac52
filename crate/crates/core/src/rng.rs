//! Seeded random streams.
//!
//! Every stream is ChaCha8 keyed by the 64-bit run seed (expanded with
//! `SeedableRng::seed_from_u64`) and separated by the ChaCha stream number:
//! stream 0 draws scenarios, stream `1 + i` drives the simulated duration
//! jitter of worker `i`. The generator is portable and its output is fixed
//! across platforms, so seeded runs are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCENARIO_STREAM: u64 = 0;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn scenario_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, SCENARIO_STREAM)
}

pub fn worker_stream(seed: u64, worker: usize) -> ChaCha8Rng {
    stream(seed, 1 + worker as u64)
}

/// Cumulative sums of `q` with the last entry pinned to exactly 1.
pub fn cumulative(q: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = q
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    cum
}

/// Inverse-CDF draw: the first index with `u < cum[s]` for `u` uniform in `[0, 1)`.
pub fn draw_index<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let s = cum.partition_point(|&c| c <= u);
    s.min(cum.len() - 1)
}
