//! Keyed random streams.
//!
//! Every random object (a weight layer, an input point, a probe direction) is
//! drawn from its own ChaCha8 stream whose key is derived from a root seed and
//! a path of indices. Two draws with the same path see the same numbers no
//! matter in which order, or on which thread, they are requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tags. Kept distinct so paths from different subsystems never collide.
pub mod tag {
    pub const LAYER: u64 = 0x004c_4159_4552;
    pub const SIGNS: u64 = 0x0053_4947_4e53;
    pub const INPUT: u64 = 0x0049_4e50_5554;
    pub const TRIAL_NET: u64 = 0x0054_524e_4554;
    pub const TRIAL_INPUT: u64 = 0x0054_5249_4e50;
    pub const PROBE: u64 = 0x0050_524f_4245;
    pub const POWER: u64 = 0x0050_4f57_4552;
    pub const SWEEP: u64 = 0x0053_5745_4550;
    pub const BOUND: u64 = 0x0042_4f55_4e44;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and an index path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Opens the stream identified by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], scale: f64) {
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = z * scale;
    }
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_normal(rng, &mut v, 1.0);
    v
}

/// Uniform point on the unit sphere of R^n (n >= 1).
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vec(rng, n);
        let norm = crate::linalg::norm(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Uniform draw from {-1, +1}.
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}
