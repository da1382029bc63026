//! Seeded substreams for reproducible parallel Monte Carlo.
//!
//! Every stochastic operation takes a master seed plus a tag path (scenario
//! id, replication index, ...) and derives an independent counter-based
//! stream. Results are therefore identical regardless of the execution order
//! of parallel workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used to mix tags into the master seed.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha substream from `master` and a tag path.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = master ^ 0x6a09e667f3bcc908;
    let mut seed_lo = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x2545f4914f6cdd1d);
        seed_lo = splitmix64(&mut state);
    }
    let seed_hi = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&seed_lo.to_le_bytes());
    seed[8..16].copy_from_slice(&seed_hi.to_le_bytes());
    seed[16..24].copy_from_slice(&master.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}
