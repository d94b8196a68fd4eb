//! Splittable counter-based random streams.
//!
//! Every draw is a pure function of `(key, counter)`. Keys are derived by
//! hashing a parent key with a child index, so a replicate's stream depends
//! only on `(master seed, replicate index)` and a tree node's stream only on
//! its label `u = u_1 ⋯ u_n`. Any traversal order and any number of worker
//! threads therefore see the same numbers.

use rand_core::{impls, RngCore};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of the `index`-th child stream of `key`.
#[inline]
pub fn split(key: u64, index: u64) -> u64 {
    mix64(key ^ mix64(index.wrapping_mul(GAMMA) ^ SPLIT_SALT).rotate_left(17)).wrapping_add(GAMMA)
}

/// Root key of replicate `r` under `master_seed`.
pub fn replicate_key(master_seed: u64, r: u64) -> u64 {
    split(mix64(master_seed ^ 0x6A09_E667_F3BC_C908), r)
}

/// A stateless generator stepping a counter through `mix(key, counter)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream; does not advance `self`.
    pub fn child(&self, index: u64) -> CounterRng {
        CounterRng::new(split(self.key, index))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(c.wrapping_mul(GAMMA).wrapping_add(SPLIT_SALT)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
