//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream keyed by
//! `(master seed, purpose)` and selected by an index (sensor or group
//! ordinal). A stream depends on nothing else, so results do not change with
//! worker count or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Sensor geometry and surface loading.
    Sensor,
    /// Photon shot noise of single-sensor reads.
    ShotNoise,
    /// Assignment of RNA copies to binding sites; carries the copy count so
    /// each load level gets its own key.
    RnaLoad(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Sensor => 0x5345_4e53_4f52_0001,
            Purpose::ShotNoise => 0x5348_4f54_4e53_0002,
            Purpose::RnaLoad(copies) => 0x524e_414c_4f41_0003 ^ splitmix64(copies),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        splitmix64(seed),
        splitmix64(seed ^ purpose.tag()),
        splitmix64(purpose.tag().rotate_left(17)),
        splitmix64(seed.rotate_left(29) ^ 0x6e76_7265_6c61_7800),
    ];
    for (chunk, word) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
