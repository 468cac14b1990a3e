//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by a
//! 64-bit seed derived from the user seed and a stage name, with the ChaCha
//! stream id selecting a per-item substream (entity, restart, replication).
//! ChaCha is counter based, so substreams are independent of the order in
//! which workers consume them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a stage label (FNV-1a of the label,
/// mixed through splitmix64).
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Derive a child seed for the `index`-th item of a stage.
pub fn derive_indexed(seed: u64, stage: &str, index: u64) -> u64 {
    splitmix64(derive_seed(seed, stage) ^ splitmix64(index.wrapping_add(1)))
}

/// Generator for `stage`, positioned on substream `stream`.
pub fn stream_rng(seed: u64, stage: &str, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stage));
    rng.set_stream(stream);
    rng
}

/// Uniform draw in the half-open interval (0, 1].
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard normal via the Box–Muller transform (cosine branch only, so one
/// normal consumes exactly two uniforms).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng);
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * standard_normal(rng)
}

/// Exponential with the given rate, by inverse CDF.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Gamma with integer shape and the given scale, as a sum of exponentials.
pub fn gamma_integer_shape<R: Rng + ?Sized>(rng: &mut R, shape: u32, scale: f64) -> f64 {
    (0..shape).map(|_| exponential(rng, 1.0)).sum::<f64>() * scale
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Poisson draw with mean `lambda`.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Simple random sample of `size` distinct indices out of `0..n`, in draw
/// order (partial Fisher–Yates).
pub fn sample_without_replacement<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    let size = size.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(size);
    pool
}
