//! Named, counter-based random streams.
//!
//! All randomness in the crate flows through ChaCha8 keyed by a user seed
//! and a stream id, so a given (seed, stream) pair always replays the same
//! sequence and independent consumers never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Phases of the Weierstrass-Mandelbrot sum.
pub const TERRAIN_PHASES: u64 = 0x7465_7272;
/// Grip sampling during climbs.
pub const CLIMB_GRIP: u64 = 0x6772_6970;
/// Base stream for Monte Carlo trials; trial `i` uses `MONTE_CARLO + i`.
pub const MONTE_CARLO: u64 = 0x1_0000_0000;

pub type StreamRng = ChaCha8Rng;

/// Returns the generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
