//! Stable seed derivation.
//!
//! Seeds for folds, epochs and individual frames are derived from a single
//! global seed by hashing labelled components. The hash is FNV-1a followed by
//! a SplitMix64 finalizer, so derived seeds do not depend on the standard
//! library's unstable `Hasher` implementations or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct SeedHasher(u64);

impl SeedHasher {
    pub fn new(base: u64) -> Self {
        let mut h = SeedHasher(FNV_OFFSET);
        h.write(&base.to_le_bytes());
        h
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn str(mut self, s: &str) -> Self {
        self.write(&(s.len() as u64).to_le_bytes());
        self.write(s.as_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.write(&v.to_le_bytes());
        self
    }

    pub fn finish(self) -> u64 {
        splitmix64(self.0)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a single frame's augmentation stream.
pub fn frame_seed(global: u64, subject: &str, sequence: &str, frame: u64) -> u64 {
    SeedHasher::new(global)
        .str(subject)
        .str(sequence)
        .u64(frame)
        .finish()
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        let a = SeedHasher::new(7).str("fold").u64(1).finish();
        let b = SeedHasher::new(7).str("fold").u64(1).finish();
        let c = SeedHasher::new(7).str("fold").u64(2).finish();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // length prefix keeps ("ab","c") apart from ("a","bc")
        let x = SeedHasher::new(0).str("ab").str("c").finish();
        let y = SeedHasher::new(0).str("a").str("bc").finish();
        assert_ne!(x, y);
    }

    #[test]
    fn frame_seed_depends_on_every_component() {
        let base = frame_seed(1, "S01", "q1", 3);
        assert_ne!(base, frame_seed(2, "S01", "q1", 3));
        assert_ne!(base, frame_seed(1, "S02", "q1", 3));
        assert_ne!(base, frame_seed(1, "S01", "q2", 3));
        assert_ne!(base, frame_seed(1, "S01", "q1", 4));
    }
}
