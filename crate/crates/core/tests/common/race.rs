//! Monte-Carlo double-spend race.
//!
//! While the honest chain mines `z` blocks the attacker mines a Poisson
//! number of blocks with mean `z * q / p`. The race then continues block by
//! block, each block the attacker's with probability `q`, until the
//! attacker draws level or falls `cap` blocks behind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    let limit = (-lambda).exp();
    let mut k = 0;
    let mut prod: f64 = rng.gen();
    while prod > limit {
        k += 1;
        prod *= rng.gen::<f64>();
    }
    k
}

fn trial(rng: &mut ChaCha8Rng, q: f64, z: u32, cap: i64) -> bool {
    let lambda = f64::from(z) * q / (1.0 - q);
    let mut deficit = i64::from(z) - i64::from(poisson(rng, lambda));
    let threshold = (q * u64::MAX as f64) as u64;
    while deficit > 0 && deficit < cap {
        if rng.gen::<u64>() < threshold {
            deficit -= 1;
        } else {
            deficit += 1;
        }
    }
    deficit <= 0
}

/// Fraction of `trials` races the attacker wins. Deterministic in `seed`.
pub fn race_mc(q: f64, z: u32, trials: u64, seed: u64) -> f64 {
    let cap = 80;
    let chunks = 64u64;
    let wins: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c << 32) ^ u64::from(z) << 16);
            let n = trials / chunks + u64::from(c < trials % chunks);
            (0..n).filter(|_| trial(&mut rng, q, z, cap)).count() as u64
        })
        .sum();
    wins as f64 / trials as f64
}
