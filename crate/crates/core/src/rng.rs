//! Seeded pseudo-random streams.
//!
//! The generator is xorshift64* seeded through SplitMix64, so the streams
//! are reproducible from their update equations alone:
//!
//! ```text
//! splitmix64(z):  z += 0x9E3779B97F4A7C15
//!                 z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                 z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                 return z ^ (z >> 31)
//!
//! xorshift64*:    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
//!                 return x * 0x2545F4914F6CDD1D
//! ```
//!
//! All multiplications and additions wrap modulo 2^64. A stream for
//! `(seed, key...)` is seeded with `splitmix64` folded over the keys; a zero
//! state is replaced by `0x9E3779B97F4A7C15`. Uniform floats take the top 53
//! bits: `(next >> 11) * 2^-53`. Normal variates use Box-Muller on two
//! uniforms `u1 = 1 - uniform()`, `u2 = uniform()`, returning
//! `sqrt(-2 ln u1) * cos(2 pi u2)` (the sine branch is discarded).

/// One SplitMix64 step applied to `z`.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of keys into a single seed.
pub fn mix(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// xorshift64* generator.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = splitmix64(seed);
        Self {
            state: if state == 0 { 0x9E37_79B9_7F4A_7C15 } else { state },
        }
    }

    /// Independent stream derived from a seed and a key path.
    pub fn stream(seed: u64, keys: &[u64]) -> Self {
        Self::new(mix(seed, keys))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize % n
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
