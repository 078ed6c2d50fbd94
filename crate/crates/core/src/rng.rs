//! Seed derivation for the stratified bootstrap.
//!
//! Every (task, replicate) pair gets its own ChaCha8 stream:
//!
//! 1. `task_key = fnv1a64(task_id)`
//! 2. `task_seed = splitmix64(seed ^ task_key)`
//! 3. generator = `ChaCha8Rng::seed_from_u64(task_seed)` with stream id = replicate index
//!
//! Indices in `0..n` are drawn with Lemire's widening-multiply rejection method
//! on `next_u64`. Output therefore does not depend on task order, thread count
//! or the `rand` crate's range-sampling internals. [`ALGORITHM_ID`] is written
//! next to every archived result.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const ALGORITHM_ID: &str = "chacha8-stream/splitmix64-fnv1a/lemire-u64/v1";

pub fn fnv1a64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn task_seed(seed: u64, task_id: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(task_id))
}

/// Per-task generator factory; [`TaskStreams::replicate`] is cheap.
#[derive(Clone)]
pub struct TaskStreams {
    base: ChaCha8Rng,
}

impl TaskStreams {
    pub fn new(seed: u64, task_id: &str) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(task_seed(seed, task_id)),
        }
    }

    pub fn replicate(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(rep);
        rng.set_word_pos(0);
        rng
    }
}

/// Uniform index in `0..n`. `n` must be non-zero.
pub fn sample_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let range = n as u64;
    let threshold = range.wrapping_neg() % range;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(range);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// `n` draws with replacement from `0..n`, in draw order.
pub fn resample_indices<R: RngCore>(rng: &mut R, n: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..n).map(|_| sample_index(rng, n)));
}
