//! Seeded random streams.
//!
//! Every run owns one root seed. Independent ChaCha8 streams are carved out of
//! it by `(purpose, id)`, so an agent's draws never depend on how many other
//! agents exist or in which order they are updated. ChaCha8 is a fully
//! specified algorithm, which keeps the streams identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the engine.
pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Streams of different purposes never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Random-walk motion of one agent.
    Motion = 1,
    /// Model decisions of one agent (mode draws, routine gates).
    Decision = 2,
    /// Population initialisation of one agent.
    Init = 3,
    /// Model-wide initialisation draws (shuffles, assignments).
    Setup = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngFactory {
    seed: u64,
}

impl RngFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the stream for `(purpose, id)`.
    pub fn stream(&self, purpose: Purpose, id: u64) -> SimRng {
        debug_assert!(id < (1 << 48), "stream id out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << 48) | id);
        rng
    }
}

/// Uniform draw in `[0, 1)`.
pub fn unit(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

/// Bernoulli draw: `true` with probability `p` (clamped into `[0, 1]`).
pub fn chance(rng: &mut SimRng, p: f64) -> bool {
    unit(rng) < p
}
