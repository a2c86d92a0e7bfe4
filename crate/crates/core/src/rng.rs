//! Counter-based splittable random streams.
//!
//! Every draw is a pure function of `(seed, purpose, path, step, counter)`, so
//! work can be split across threads in any order and still reproduce the
//! serial result bit for bit.

use std::f64::consts::PI;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.wrapping_add(GOLDEN) ^ mix64(word.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Seed of an independent sub-stream family.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    absorb(mix64(seed), stream)
}

/// Stream purposes. Distinct purposes never share a key.
pub mod purpose {
    pub const INCREMENTS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DIRECTIONS: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const MEASUREMENT: u64 = 5;
    pub const MLMC: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const TEST: u64 = 99;
}

/// Key of a stream: seed, purpose, path index and step index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: u64,
    pub path: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: u64, path: u64, step: u64) -> Self {
        Self {
            seed,
            purpose,
            path,
            step,
        }
    }

    fn digest(&self) -> u64 {
        let mut h = mix64(self.seed ^ 0xD1B5_4A32_D192_ED03);
        h = absorb(h, self.purpose);
        h = absorb(h, self.path);
        absorb(h, self.step)
    }
}

/// A stream of 64-bit words indexed by an internal counter.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64, purpose: u64, path: u64, step: u64) -> Self {
        Self::from_key(StreamKey::new(seed, purpose, path, step))
    }

    pub fn from_key(key: StreamKey) -> Self {
        Self {
            key: key.digest(),
            counter: 0,
            spare: None,
        }
    }

    /// Word at an absolute counter position; does not advance the stream.
    #[inline]
    pub fn word_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = self.word_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    #[inline]
    fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Index uniform on `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// One Box–Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = self.normal_pair();
        self.spare = Some(b);
        a
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.normal();
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
