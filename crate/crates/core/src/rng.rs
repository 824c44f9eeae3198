//! Counter-based deterministic random number generation.
//!
//! Every consumer derives an independent stream from `(seed, trial, stream)`,
//! so Monte Carlo trials can be sharded across any number of workers without
//! changing the numbers any trial sees.

/// SplitMix64 finalizer; a 64-bit bijective mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic RNG keyed by `(seed, trial, stream)`.
///
/// Output `i` is a pure function of the key and `i`, which makes the
/// sequence reproducible regardless of how work is partitioned.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, trial: u64, stream: u64) -> Self {
        let mut h = mix64(seed ^ GOLDEN);
        h = mix64(h ^ trial.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h = mix64(h ^ stream.wrapping_mul(0x94d0_49bb_1331_11eb));
        Self { state: h }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform in `[0, n)`.
    #[inline]
    pub fn next_range(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Packs `bits` random bits into little-endian 64-bit words.
    pub fn next_bit_words(&mut self, bits: usize) -> Vec<u64> {
        let words = bits.div_ceil(64);
        let mut out = Vec::with_capacity(words);
        for w in 0..words {
            let mut v = self.next_u64();
            if w == words - 1 && bits % 64 != 0 {
                v &= (1u64 << (bits % 64)) - 1;
            }
            out.push(v);
        }
        out
    }
}
