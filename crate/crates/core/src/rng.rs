//! Reproducible per-replica random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes drawn from the same replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Uniform vertex and step draws of a growing tree.
    Attach = 0,
    /// Exponential clocks of the continuous-time embedding.
    Clock = 1,
    /// Anything else (walk Monte-Carlo, fringe stopping times).
    Aux = 2,
}

/// Stream for `(master seed, replica, purpose)`. Streams never overlap and do
/// not depend on how replicas are scheduled across threads.
pub fn stream(master: u64, replica: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((replica << 4) | purpose as u64);
    rng
}
