use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pulses per independently keyed random stream.
///
/// Streams are keyed by `pulse_index / CHUNK_PULSES`, never by worker, so
/// results do not depend on how chunks are spread over threads.
pub const CHUNK_PULSES: u64 = 1 << 16;

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Derive an independent sub-seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Half-open chunk ranges covering `0..n`.
pub fn chunks(n: u64) -> impl Iterator<Item = (u64, u64, u64)> {
    let count = n.div_ceil(CHUNK_PULSES);
    (0..count).map(move |c| {
        let start = c * CHUNK_PULSES;
        (c, start, (start + CHUNK_PULSES).min(n))
    })
}
