//! Deterministic random streams for simulation.
//!
//! Every sampled row gets its own ChaCha8 stream keyed by a splitmix64 hash
//! of the experiment seed and the row index. Draws therefore never depend on
//! evaluation order, which keeps parallel and sequential runs byte-identical.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses a seed and a stream index into a fresh 64-bit key.
#[must_use]
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut state = seed;
    let a = splitmix64(&mut state);
    state ^= stream.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let b = splitmix64(&mut state);
    a ^ b.rotate_left(17)
}

/// Independent generator for one row of one stream.
#[must_use]
pub fn row_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let key = mix(seed, stream);
    let mut bytes = [0u8; 32];
    let mut state = key;
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index drawn from an unnormalized nonnegative weight vector.
///
/// Zero-weight entries can never be returned; the final positive entry
/// absorbs any floating-point shortfall in the cumulative scan.
pub fn categorical<R: RngCore>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "categorical needs positive total mass");
    let u = unit_f64(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if u < acc {
            return i;
        }
    }
    last_positive
}
