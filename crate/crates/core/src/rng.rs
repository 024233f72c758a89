//! Seeded random substreams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! master seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Preferences,
    StationaryArrivals,
    Decisions,
    Purchases,
    SegmentWeights,
    /// Thinning stream for one customer type of a non-stationary model.
    Type(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Self::Preferences => 1,
            Self::StationaryArrivals => 2,
            Self::Decisions => 3,
            Self::Purchases => 4,
            Self::SegmentWeights => 5,
            Self::Type(j) => 1_000 + j as u64,
        }
    }
}

pub(crate) fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
