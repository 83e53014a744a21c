//! Deterministic random-stream derivation.
//!
//! Every draw in the toolkit comes from a ChaCha12 stream keyed by the run
//! seed plus a domain tag and the indices that identify the draw (location,
//! packet index, epoch, ...). Streams are therefore independent of call
//! order, which is what makes dataset generation parallelizable and every
//! pipeline stage bit-reproducible.

use crate::geometry::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Domain separation tags for derived streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    WallPhase = 1,
    Impairment = 2,
    Noise = 3,
    Augment = 4,
    WeightInit = 5,
    Shuffle = 6,
    Dropout = 7,
    TestPoints = 8,
}

/// SplitMix64 step; the standard 64-bit finalizer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a ChaCha12 stream from the seed and a list of key words.
pub fn derive_stream(seed: u64, domain: Domain, keys: &[u64]) -> ChaCha12Rng {
    let mut state = seed ^ 0xA076_1D64_78BD_642F;
    let mut mixed = splitmix64(&mut state) ^ (domain as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let mut chacha_seed = [0u8; 32];
    for key in keys {
        state ^= *key;
        mixed ^= splitmix64(&mut state);
    }
    state ^= mixed;
    for chunk in chacha_seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(chacha_seed)
}

/// Stream keyed by a location and packet index (per-packet draws).
pub fn packet_stream(seed: u64, domain: Domain, location: Point2, packet_index: u64) -> ChaCha12Rng {
    derive_stream(
        seed,
        domain,
        &[location.x.to_bits(), location.y.to_bits(), packet_index],
    )
}

/// Uniform draw on `[-half_width, half_width]`.
pub fn uniform_symmetric(rng: &mut ChaCha12Rng, half_width: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * half_width
}

/// Uniform draw on `[-pi, pi)`.
pub fn uniform_angle(rng: &mut ChaCha12Rng) -> f64 {
    (rng.random::<f64>() - 0.5) * std::f64::consts::TAU
}

/// One standard-normal draw via Box-Muller.
pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
