//! Seeded pseudo-random numbers shared by every stochastic stage.
//!
//! The generator is PCG32 (XSH-RR output, 64-bit LCG state) so that any
//! implementation following the constants below draws the same stream:
//!
//! * state transition: `state = state * 6364136223846793005 + inc (mod 2^64)`
//! * output: `rotr32(((old >> 18) ^ old) >> 27, old >> 59)`
//! * seeding `(seed, stream)`: `inc = (stream << 1) | 1`, `state = 0`, step,
//!   `state += seed`, step
//! * `next_u64` is `(hi << 32) | lo` of two consecutive 32-bit outputs
//! * `below(n)` rejects draws `< (2^64 - n) mod n`, then returns `draw mod n`
//! * `unit_f64` is `(next_u64 >> 11) * 2^-53`, `open_unit_f64` adds half a step
//!
//! Sub-seeds for batches, trees and folds come from [`derive_seed`]: FNV-1a 64
//! over the label bytes, xored with the parent seed and passed through the
//! SplitMix64 finalizer.

const PCG_MULTIPLIER: u64 = 6364136223846793005;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    /// Generator on the default stream.
    pub fn seeded(seed: u64) -> Self {
        Self::new(seed, 0xda3e_39cb_94b9_5bdb)
    }

    #[inline]
    fn step(&mut self) {
        self.state = self.state.wrapping_mul(PCG_MULTIPLIER).wrapping_add(self.inc);
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn open_unit_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Child seed for a named sub-task, e.g. `derive_seed(seed, "batch:b03")`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64_finalize(seed ^ fnv1a64(label.as_bytes()))
}

/// Child seed for the `index`-th member of a family (trees, folds).
pub fn derive_indexed_seed(seed: u64, family: &str, index: u64) -> u64 {
    splitmix64_finalize(derive_seed(seed, family).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}
