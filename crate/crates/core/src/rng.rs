//! Counter-based pseudo-random numbers with deterministic seed splitting.
//!
//! Simulations here must be reproducible bit-for-bit across platforms and
//! across language bindings, so we avoid platform-dependent generators and
//! use a counter construction: draw `i` is `mix64(key + (i+1)*GOLDEN)`,
//! with `mix64` the 64-bit finalizer from SplitMix64. Streams for
//! (seed, step, agent) triples come from the documented two-stage split in
//! [`child_seed`], so independent batches never share a counter sequence.
//!
//! Gaussian variates use the Box–Muller transform on open-interval uniforms.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_B: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer: a bijective 64-bit mix with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for one agent's batch at one step:
/// `mix64(mix64(seed + (step+1)*GOLDEN) + (agent+1)*SPLIT_B)`.
pub fn child_seed(seed: u64, step: u64, agent: u64) -> u64 {
    let stage1 = mix64(seed.wrapping_add(step.wrapping_add(1).wrapping_mul(GOLDEN)));
    mix64(stage1.wrapping_add(agent.wrapping_add(1).wrapping_mul(SPLIT_B)))
}

/// Seedable counter-based generator.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: seed,
            counter: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on the open interval (0, 1); never returns 0, so logs are safe.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    /// Standard normal via Box–Muller; the paired variate is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * phi.sin());
        r * phi.cos()
    }
}
