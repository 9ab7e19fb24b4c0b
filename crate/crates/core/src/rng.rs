//! Named, reproducible random streams.
//!
//! Each concern (mobility, fading, ...) draws from its own ChaCha stream whose
//! seed is a hash of `(master_seed, label, replication)`. Adding draws to one
//! concern never shifts another concern's sequence.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamLabel {
    Mobility,
    Fading,
    Possession,
    GameOrder,
    Baseline,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 5] = [
        StreamLabel::Mobility,
        StreamLabel::Fading,
        StreamLabel::Possession,
        StreamLabel::GameOrder,
        StreamLabel::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Mobility => "mobility",
            StreamLabel::Fading => "fading",
            StreamLabel::Possession => "possession",
            StreamLabel::GameOrder => "game-order",
            StreamLabel::Baseline => "baseline",
        }
    }

    fn code(self) -> u64 {
        match self {
            StreamLabel::Mobility => 1,
            StreamLabel::Fading => 2,
            StreamLabel::Possession => 3,
            StreamLabel::GameOrder => 4,
            StreamLabel::Baseline => 5,
        }
    }
}

impl fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single-owner random stream tagged with the concern it serves.
#[derive(Debug, Clone)]
pub struct RngStream {
    label: StreamLabel,
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn label(&self) -> StreamLabel {
        self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master_seed: u64, label: StreamLabel, replication: u64) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ label.code().wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ replication.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn derive_stream(cfg: &SimConfig, label: StreamLabel, replication: u64) -> RngStream {
    stream_from_seed(cfg.master_seed, label, replication)
}

pub fn stream_from_seed(master_seed: u64, label: StreamLabel, replication: u64) -> RngStream {
    let seed = stream_seed(master_seed, label, replication);
    RngStream {
        label,
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// The full set of streams owned by one replication.
#[derive(Debug, Clone)]
pub struct Streams {
    pub mobility: RngStream,
    pub fading: RngStream,
    pub possession: RngStream,
    pub game_order: RngStream,
    pub baseline: RngStream,
}

impl Streams {
    pub fn new(master_seed: u64, replication: u64) -> Self {
        Self {
            mobility: stream_from_seed(master_seed, StreamLabel::Mobility, replication),
            fading: stream_from_seed(master_seed, StreamLabel::Fading, replication),
            possession: stream_from_seed(master_seed, StreamLabel::Possession, replication),
            game_order: stream_from_seed(master_seed, StreamLabel::GameOrder, replication),
            baseline: stream_from_seed(master_seed, StreamLabel::Baseline, replication),
        }
    }
}
