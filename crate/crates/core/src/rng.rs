//! Seeded random streams.
//!
//! SplitMix64 is used as the generator: tiny, well mixed, and identical on
//! every platform, which keeps runs bit-reproducible. Each noise source in a
//! scenario draws from its own substream derived from the master seed and a
//! text label, so adding a draw to one source never perturbs another.

/// Deterministic random stream (SplitMix64).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Gaussian draw via Box-Muller (one value per call, two uniforms consumed).
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return mean;
        }
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        mean + sigma * r * libm::cos(crate::geom::TAU * u2)
    }

    /// Uniform integer in [0, n). Rejection-free modulo bias is negligible for
    /// the small `n` used here (shuffles, index picks).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// FNV-1a over a byte slice; used for labels and config fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_update(0xcbf2_9ce4_8422_2325, bytes)
}

/// Streaming FNV-1a step for incremental hashing of long logs.
pub fn fnv1a64_update(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// FNV-1a offset basis, the initial state for [`fnv1a64_update`].
pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Derive an independent substream seed from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut mix = Rng::new(master ^ fnv1a64(label.as_bytes()));
    mix.next_u64()
}
