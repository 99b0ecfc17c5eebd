//! Counter-based seed splitting.
//!
//! Every stochastic job derives its own generator from `(master, stream, index)`
//! so results do not depend on how jobs are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type JobRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed for job `index` of stream `stream`.
pub fn split(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn job_rng(master: u64, stream: u64, index: u64) -> JobRng {
    ChaCha8Rng::seed_from_u64(split(master, stream, index))
}

/// Stream tags used across the crate.
pub mod stream {
    pub const PULLBACK_SEED: u64 = 1;
    pub const BACKWARD_ORBIT: u64 = 2;
    pub const DIRECTIONS: u64 = 3;
    pub const TUBE_SAMPLES: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const LINES: u64 = 7;
    pub const HOMOTOPY: u64 = 8;
    pub const ATLAS: u64 = 9;
    pub const GRID: u64 = 10;
    pub const CRITICAL: u64 = 11;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn split_is_deterministic_and_spreads() {
        assert_eq!(split(7, 1, 2), split(7, 1, 2));
        assert_ne!(split(7, 1, 2), split(7, 1, 3));
        assert_ne!(split(7, 1, 2), split(7, 2, 2));
        let a: f64 = job_rng(1, 2, 3).random();
        let b: f64 = job_rng(1, 2, 3).random();
        assert_eq!(a, b);
    }
}
