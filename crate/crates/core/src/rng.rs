//! Seeded random streams.
//!
//! All randomness flows from one run seed through ChaCha streams so that a
//! run is reproducible bit-for-bit on any platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// Stream ids for the independent consumers of a run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init,
    Dropout,
    /// Shuffling for the given epoch.
    Shuffle(u64),
    Synthetic,
    /// State process of the i-th synthetic appliance.
    Appliance(u64),
    /// Aggregate measurement noise of a synthetic household.
    MeterNoise,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Dropout => 2,
            Stream::Synthetic => 3,
            Stream::MeterNoise => 4,
            Stream::Appliance(i) => 100 + i,
            Stream::Shuffle(epoch) => 1_000 + epoch,
        }
    }
}

/// Child seed for a named sub-run, stable across platforms and releases.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn stream(seed: u64, which: Stream) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
