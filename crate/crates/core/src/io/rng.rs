//! Counter-addressable random streams.
//!
//! Every draw is located by (seed, stream, index): the stream selects an
//! independent ChaCha8 keystream and the index fixes the word position, so any
//! subset of draws can be generated in any order or on any thread.

use rand_chacha::rand_core::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Euler-Mascheroni constant; Gumbel draws are centered by it.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Streams reserved for economy-level draws; per-(city, type) streams start above.
pub mod streams {
    pub const CITY_PRIMITIVES: u64 = 1;
    pub const INDUSTRY: u64 = 2;
    pub const PERIOD_DRIFT: u64 = 3;
    pub const LOCATION: u64 = 16;
    pub const MARRIAGE: u64 = 1 << 32;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRng {
    seed: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng { seed }
    }

    /// A generator positioned at draw `index` of `stream`, with `width` 64-bit
    /// words reserved per draw.
    pub fn at(&self, stream: u64, index: u64, width: u64) -> Draws {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(index) * u128::from(width) * 2);
        Draws { rng }
    }
}

pub struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    /// Uniform on the open unit interval.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Mean-zero Gumbel: -ln(-ln U) - gamma.
    pub fn gumbel(&mut self) -> f64 {
        -(-self.uniform().ln()).ln() - EULER_GAMMA
    }

    /// Standard normal by Box-Muller, consuming two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
