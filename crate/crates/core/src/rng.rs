//! Seeded random streams.
//!
//! Every stochastic routine draws from a [`ChaCha8Rng`] obtained here. A
//! master seed is split by `(purpose, replica)` into a 256-bit key, and the
//! ChaCha stream id selects the sensor, so adding a sensor never changes the
//! draws seen by the others.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Independent purposes that consume randomness from the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Placement,
    Channel,
    Field,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Placement => 0x706c_6163,
            Purpose::Channel => 0x6368_616e,
            Purpose::Field => 0x6669_656c,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for one `(purpose, replica, lane)` triple. `lane` is the sensor
/// index for channel draws and 0 otherwise.
pub fn stream(seed: u64, purpose: Purpose, replica: u64, lane: u64) -> ChaCha8Rng {
    let mut state = seed ^ purpose.tag().rotate_left(32);
    let mut key = [0u8; 32];
    let mut mix = splitmix64(&mut state) ^ replica.wrapping_mul(0xd6e8_feb8_6659_fd93);
    for chunk in key.chunks_exact_mut(8) {
        mix = splitmix64(&mut mix);
        chunk.copy_from_slice(&mix.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(lane);
    rng
}
