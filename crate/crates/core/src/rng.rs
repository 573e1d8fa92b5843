//! Pinned, platform-independent random streams.
//!
//! Every stochastic step in the toolkit draws from ChaCha8 (via `rand_chacha`)
//! keyed by a `u64` seed. Independent sub-streams are obtained with ChaCha's
//! native 64-bit stream selector, so per-sample and per-member draws do not
//! depend on evaluation order. Gaussian variates use the Box–Muller transform
//! on that stream.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name of the generator, recorded in run manifests.
pub const PRNG_NAME: &str = "ChaCha8 (rand_chacha 0.3, seed_from_u64 + set_stream), Box-Muller normals";

/// Well-known stream indices so that unrelated consumers of one seed never overlap.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const DROPOUT: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const DATA: u64 = 3;
    pub const HMC: u64 = 4;
    /// Per-sample streams start here: sample `s` uses `SAMPLE_BASE + s`.
    pub const SAMPLE_BASE: u64 = 1 << 32;
    /// Child-seed derivation streams: label `k` uses `DERIVE_BASE + k`.
    pub const DERIVE_BASE: u64 = 1 << 48;
}

/// Seeded random stream with uniform and standard-normal draws.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Sub-stream `stream` of `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    fn uniform_open_closed(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [low, high].
    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire-style multiply-shift; bias is below 2^-32 for the sizes used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal variate (Box–Muller, both outputs used).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Deterministically derive a child seed from `seed` and a label index.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    Rng::stream(seed, streams::DERIVE_BASE + label).next_u64()
}
