//! Deterministic per-path random streams.
//!
//! Path `i` of a run with master seed `s` draws from a ChaCha8 stream keyed by
//! `splitmix64(s ^ splitmix64(i + φ))`. The ChaCha stream id separates
//! independent uses of the same path index within one run (P-paths, Q-paths,
//! permutation shuffles). Nothing depends on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(GOLDEN)))
}

/// Named purposes, used as ChaCha stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    P = 1,
    Q = 2,
    Mixing = 3,
    Permutation = 4,
    Auxiliary = 5,
}

pub fn path_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(master, index));
    rng.set_stream(stream as u64);
    rng
}
