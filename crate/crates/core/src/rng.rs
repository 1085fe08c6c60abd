//! Counter-based random streams.
//!
//! A stream is a pure function of `(master_seed, replica_index, counter)`:
//! the `i`-th output is `block(key, i)` where the key is derived from the
//! seed and the replica index. Nothing else is carried between draws, so a
//! saved `(seed, replica, counter)` triple replays the tail exactly and two
//! streams with different `(seed, replica)` never share state.
//!
//! The block function is two rounds of the SplitMix64 finalizer: the low
//! counter word goes through a Weyl sequence with the first key word, the
//! high word and the second key word are folded in before the second round.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 output finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps 64 random bits to a uniform double in `[0, 1)` using the top 53 bits.
#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent 64-bit seed from a parent seed and an index.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent ^ STREAM_SALT).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Saved position of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub master_seed: u64,
    pub replica_index: u64,
    pub counter: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    replica_index: u64,
    key: [u64; 2],
    counter: u128,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "splitmix-counter-2x64";

    pub fn new(master_seed: u64, replica_index: u64) -> Self {
        let k0 = mix64(master_seed ^ mix64(replica_index.wrapping_add(GOLDEN)));
        let k1 = mix64(k0 ^ STREAM_SALT.wrapping_add(replica_index));
        RngStream {
            master_seed,
            replica_index,
            key: [k0, k1],
            counter: 0,
        }
    }

    pub fn from_state(state: StreamState) -> Self {
        let mut s = RngStream::new(state.master_seed, state.replica_index);
        s.counter = state.counter;
        s
    }

    pub fn state(&self) -> StreamState {
        StreamState {
            master_seed: self.master_seed,
            replica_index: self.replica_index,
            counter: self.counter,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replica_index(&self) -> u64 {
        self.replica_index
    }

    /// Number of raw draws consumed so far.
    pub fn counter(&self) -> u128 {
        self.counter
    }

    #[inline(always)]
    fn block(&self, counter: u128) -> u64 {
        let lo = counter as u64;
        let hi = (counter >> 64) as u64;
        let x = mix64(lo.wrapping_mul(GOLDEN).wrapping_add(self.key[0]));
        mix64(x ^ hi.wrapping_mul(STREAM_SALT).wrapping_add(self.key[1]))
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let out = self.block(self.counter);
        self.counter += 1;
        out
    }

    /// One raw draw mapped to `[0, 1)`.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Jumps the stream forward by `n` draws without generating them.
    pub fn advance(&mut self, n: u128) {
        self.counter += n;
    }
}
