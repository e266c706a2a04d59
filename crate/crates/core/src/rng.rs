//! Counter-based random streams.
//!
//! Every stream is a pure function of a 64-bit key and a counter, so any row
//! of a noise field can be regenerated independently of the others and
//! replicas never share generator state.

use rand::RngCore;

/// Weyl increment of SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output function (Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `r` under `master`. Adding replicas never changes the
/// seeds of existing ones.
pub fn replica_seed(master: u64, r: u64) -> u64 {
    mix64(master.wrapping_add(r.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Key of the stream that fills time row `i` of a field sampled with `seed`.
pub fn row_key(seed: u64, i: u64) -> u64 {
    mix64(seed ^ mix64(i.wrapping_mul(GOLDEN_GAMMA) ^ 0x6A09_E667_F3BC_C909))
}

/// SplitMix64 run from an arbitrary key: output `k` is `mix64(key + (k+1) gamma)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    pub fn for_row(seed: u64, i: u64) -> Self {
        Self::new(row_key(seed, i))
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
