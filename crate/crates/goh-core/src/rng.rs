//! Deterministic sampling utilities.
//!
//! All Monte-Carlo loops derive a per-sample RNG from a `(seed, lane, index)`
//! triple via splitmix64, so the sample stream is independent of evaluation
//! order and worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a global seed with lane and sample indices into one 64-bit stream key.
pub fn derive_key(seed: u64, lane: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ lane.rotate_left(24)) ^ index)
}

/// RNG for one sample, fully determined by `(seed, lane, index)`.
pub fn sample_rng(seed: u64, lane: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, lane, index))
}

/// Uniform point in the closed Euclidean ball `B(center, radius)`.
pub fn uniform_in_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    if n == 0 {
        return Vec::new();
    }
    // Gaussian direction, radius ~ r * U^(1/n).
    let mut dir = vec![0.0; n];
    let mut norm2 = 0.0;
    loop {
        for d in dir.iter_mut() {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            *d = (-2.0 * u1.ln()).sqrt() * u2.cos();
            norm2 += *d * *d;
        }
        if norm2 > 0.0 {
            break;
        }
    }
    let u: f64 = rng.gen_range(0.0..=1.0);
    let scale = radius * u.powf(1.0 / n as f64) / norm2.sqrt();
    center
        .iter()
        .zip(dir.iter())
        .map(|(c, d)| c + scale * d)
        .collect()
}

/// Van der Corput radical inverse in the given base.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const HALTON_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// i-th point of the Halton sequence in `[0,1)^dim` (dim ≤ 12).
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= HALTON_PRIMES.len(), "halton dimension too large");
    (0..dim)
        .map(|d| radical_inverse(i + 1, HALTON_PRIMES[d]))
        .collect()
}
