//! Deterministic pseudo-random generation.
//!
//! Everything in the pipeline that samples (weight init, ε-greedy draws,
//! replay sampling, fault-map generation, map generation) must replay
//! bit-for-bit from a seed, on every platform the crate compiles for,
//! across releases. A hand-rolled splitmix64 stream gives that guarantee;
//! library generators reserve the right to change their streams between
//! versions, which would silently invalidate frozen regression seeds.
//!
//! Not cryptographic. Statistical quality (it passes BigCrush) is all the
//! simulation needs.

/// splitmix64 output/finalization mix.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives an independent stream seed from a base seed and a tag.
///
/// Used to split one user-facing seed into decorrelated per-purpose streams
/// (net init, policy, replay, faults, per-map seeds) with a stable,
/// documented rule: `mix(seed ^ mix(tag + GOLDEN))`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag.wrapping_add(GOLDEN)))
}

/// Two-level derivation, e.g. (campaign seed, voltage index, map index).
pub fn derive_seed2(seed: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(seed, a), b)
}

/// splitmix64 sequence generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, 1) with 24 random bits.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform index in [0, n). Unbiased (rejects the wrap-around zone).
    pub fn gen_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "gen_index over an empty range");
        let n64 = n as u64;
        // 2^64 mod n; values below this threshold are rejected so every
        // residue class is equally likely.
        let reject_below = n64.wrapping_neg() % n64;
        loop {
            let x = self.next_u64();
            if x >= reject_below {
                return (x % n64) as usize;
            }
        }
    }

    /// Bernoulli draw. Always false for p <= 0, always true for p >= 1.
    #[inline]
    pub fn gen_bool(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        self.next_f64() < p
    }

    /// k distinct values from [0, n), in selection order (partial
    /// Fisher-Yates).
    pub fn choose_k(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} distinct values from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.gen_index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
