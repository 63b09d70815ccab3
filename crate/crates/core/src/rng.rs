//! Per-replication random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for; each role gets a disjoint stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    Beta = 0,
    Design = 1,
    Noise = 2,
    Stein = 3,
    Omega = 4,
}

/// Replication index reserved for quantities shared by every replication of a
/// sweep point (the random correlation matrix).
pub const SHARED_REP: u32 = u32::MAX;

/// Returns the generator for `(seed, sweep point, replication, role)`.
///
/// The ChaCha stream id packs the three indices injectively, so streams never
/// overlap and replications can run in any order.
pub fn stream(seed: u64, sweep_idx: u32, rep: u32, role: StreamRole) -> ChaCha20Rng {
    assert!(sweep_idx < (1 << 24), "sweep index {sweep_idx} out of range");
    let id = ((sweep_idx as u64) << 40) | ((rep as u64) << 8) | role as u64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
