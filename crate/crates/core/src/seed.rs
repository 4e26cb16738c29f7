//! Deterministic seed hierarchy.
//!
//! Every random stream in a run derives from one root seed plus a stream name,
//! so adding draws to one component never shifts the numbers another sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { seed: root }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Named child stream.
    pub fn child(&self, name: &str) -> SeedTree {
        SeedTree {
            seed: splitmix64(self.seed ^ fnv1a(name.as_bytes())),
        }
    }

    /// Child keyed by an integer sequence (e.g. a bitwidth assignment).
    pub fn child_indexed(&self, key: &[u32]) -> SeedTree {
        let mut s = splitmix64(self.seed ^ 0x5851_F42D_4C95_7F2D);
        for &k in key {
            s = splitmix64(s ^ k as u64);
        }
        SeedTree { seed: s }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}
