//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream selected by a
//! master seed and a short key (purpose tag plus indices such as iteration,
//! constraint, or agent). Two draws with the same key replay bit-for-bit, and
//! draws under different keys never share state, so results do not depend on
//! how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tags keep substreams of different subsystems apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Gaussian noise on the coupling gradient, keyed by (iteration, constraint).
    GradientNoise = 1,
    /// Uniform choice of a recorded best response, keyed by agent.
    Rounding = 2,
    /// Sparse-vector threshold and query noise, keyed by flag.
    SparseVector = 3,
    /// Per-trial seeds for sweeps and experiment harnesses.
    Trial = 4,
    /// Instance generation.
    Generate = 5,
    /// Free-form streams for tests and ad-hoc experiments.
    Scratch = 6,
}

/// The random generator handed out for one substream.
pub type Stream = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a purpose and index tuple into a 64-bit stream id.
pub fn stream_id(purpose: Purpose, indices: &[u64]) -> u64 {
    let mut h = splitmix64(purpose as u64);
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i));
    }
    h
}

/// Open the substream `(purpose, indices)` under `master`.
pub fn substream(master: u64, purpose: Purpose, indices: &[u64]) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(stream_id(purpose, indices));
    rng
}

/// Derive a child master seed, e.g. one per sweep trial.
pub fn derive_seed(master: u64, purpose: Purpose, indices: &[u64]) -> u64 {
    splitmix64(master ^ stream_id(purpose, indices))
}
