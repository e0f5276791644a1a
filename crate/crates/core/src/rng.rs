//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator keyed by the
//! user seed. Independent consumers (dataset generation, frame initialisation,
//! subsampling) read disjoint ChaCha streams, selected by a [`Stream`] tag and
//! an index, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Named sub-streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset,
    FrameInit,
    Subsample,
    Evaluation,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Dataset => 1,
            Stream::FrameInit => 2,
            Stream::Subsample => 3,
            Stream::Evaluation => 4,
        }
    }
}

/// Generator for `(seed, stream, index)`; `index` is typically a layer or class number.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((stream.tag() << 48) ^ index);
    rng
}
