//! Seeded sampling primitives shared by corpus sampling, random-target
//! assignment and campaign construction.
//!
//! The generator is PCG-XSL-RR 128/64 (`Pcg64`) seeded through
//! `seed_from_u64`; bounded draws use rejection sampling implemented here so
//! that the consumed random stream, and therefore every sample, is fixed
//! independently of any upstream crate's range-sampling strategy.

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Name recorded in manifests.
pub const GENERATOR_NAME: &str = "pcg64-xsl-rr-128/64";

pub struct SeededRng(Pcg64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(Pcg64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = (u64::MAX / bound) * bound;
        loop {
            let x = self.0.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.0.next_u64() >> 63 == 1
    }

    /// Fisher-Yates shuffle, front to back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }

    /// Draws `k` distinct indices from `0..n` in selection order
    /// (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Uniformly random permutation of `0..n` without fixed points, by
    /// rejection over shuffles. `n` must be at least 2.
    pub fn derangement(&mut self, n: usize) -> Vec<usize> {
        assert!(n >= 2);
        let mut perm: Vec<usize> = (0..n).collect();
        loop {
            self.shuffle(&mut perm);
            if perm.iter().enumerate().all(|(i, &p)| i != p) {
                return perm;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SeededRng::new(1);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..200 {
                assert!(rng.below(bound) < bound);
            }
        }
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = SeededRng::new(9);
        let s = rng.sample_indices(50, 50);
        let mut sorted = s.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn derangement_of_two_is_swap() {
        let mut rng = SeededRng::new(3);
        assert_eq!(rng.derangement(2), vec![1, 0]);
    }
}
