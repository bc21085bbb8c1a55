//! Counter-based random substreams.
//!
//! Work is cut into fixed-size blocks. Block `b` of stream `tag` under `seed`
//! always draws from the same ChaCha8 keystream no matter how many threads
//! run or in which order blocks finish, so results depend only on the seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Items (shots, randomizations) per block.
pub const BLOCK: usize = 2048;

/// Generator for block `block` of stream `tag`.
pub fn substream(seed: u64, tag: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(b"purcell!");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

/// `(block index, start, len)` covering `0..n` in blocks of [`BLOCK`].
pub fn blocks(n: usize) -> Vec<(u64, usize, usize)> {
    (0..n.div_ceil(BLOCK))
        .map(|b| {
            let start = b * BLOCK;
            (b as u64, start, BLOCK.min(n - start))
        })
        .collect()
}

/// Mixes a sub-identifier into a stream tag.
pub fn tag(parts: &[u64]) -> u64 {
    parts.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &p| {
        (h ^ p).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(17)
    })
}
