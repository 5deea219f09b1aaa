//! Deterministic counter-based random number generation.
//!
//! All randomness in the crate flows from an explicit 64-bit seed through
//! [`DetRng`]. The generator is counter-based (SplitMix64 finalizer over a
//! fixed key and an incrementing counter), so independent streams can be
//! forked for record *i* or epoch *e* and the values drawn are independent
//! of evaluation order. Output is bit-identical across platforms.

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Counter-based deterministic generator.
#[derive(Debug, Clone)]
pub struct DetRng {
    key: u64,
    counter: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng {
            key: mix(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Derive an independent child stream. The parent is not advanced, so
    /// forks depend only on (seed, tag path), never on draw order.
    pub fn fork(&self, tag: u64) -> DetRng {
        DetRng {
            key: mix(self.key ^ tag.wrapping_mul(GOLDEN).wrapping_add(0x1234_5678_9abc_def1)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be > 0.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the small n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one value per two draws).
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = self.next_f64().max(1e-12);
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        mean + std * z
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

/// Stream tags for the corpus generator and trainer. Numeric constants keep
/// fork paths stable across refactors.
pub mod streams {
    pub const LABELS: u64 = 1;
    pub const MODALITY: u64 = 2;
    pub const RECORD: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EPOCH: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const KG: u64 = 7;
    pub const SPLIT: u64 = 8;
}
