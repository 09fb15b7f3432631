//! Shared fixtures for the kernel benchmarks.

use conflow_core::state::ModeVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Truncations swept by the scaling benchmarks.
pub const SIZES: [usize; 4] = [32, 64, 128, 256];

/// Reproducible state with entries uniform in the square `[-1, 1]^2`.
pub fn random_state(n: usize, seed: u64) -> ModeVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let v = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ModeVector::new(v).expect("finite entries")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_reproducible() {
        let a = random_state(16, 3);
        assert_eq!(a.truncation(), 16);
        assert_eq!(a.to_csv(), random_state(16, 3).to_csv());
    }
}
