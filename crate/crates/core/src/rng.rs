//! Deterministic generator shared by every stochastic step.
//!
//! xorshift64* with a single 64-bit state. The hardware uses an LFSR for the
//! same job; the exact sequence is not normative, only replayability is:
//! the same seed always yields the same stream on every platform.

use serde::{Deserialize, Serialize};

const ZERO_SEED_REMAP: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    state: u64,
}

impl Rng {
    /// A zero seed is remapped to a fixed non-zero constant, since zero is
    /// the xorshift fixed point.
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_SEED_REMAP } else { seed };
        Self { state }
    }

    /// Independent child stream, e.g. one per experiment phase.
    pub fn fork(&mut self, tag: u64) -> Self {
        let mixed = self.next_u64() ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Self::new(mixed)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `[0, bound)` without modulo bias.
    ///
    /// Panics if `bound` is zero.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "Rng::below called with an empty range");
        let bound = bound as u64;
        // Largest multiple of `bound` that fits; draws at or above it are rejected.
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Uniform draw in the inclusive range `[lo, hi]`.
    pub fn between(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        lo + self.below((hi - lo) as usize + 1) as i64
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Picks one element uniformly. Returns `None` for an empty slice.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.below(items.len())])
        }
    }

    /// `count` distinct indices from `[0, n)`, uniformly, via a partial
    /// Fisher-Yates shuffle.
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot draw {count} distinct values from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let xs: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn zero_seed_does_not_lock_up() {
        let mut r = Rng::new(0);
        let first = r.next_u64();
        assert_ne!(first, 0);
        assert_ne!(first, r.next_u64());
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut r = Rng::new(7);
        let mut counts = [0usize; 7];
        let draws = 70_000;
        for _ in 0..draws {
            counts[r.below(7)] += 1;
        }
        for c in counts {
            // expected 10_000, ~5 sigma band
            assert!((9_500..10_500).contains(&c), "count {c}");
        }
    }

    #[test]
    fn below_one_is_zero() {
        let mut r = Rng::new(3);
        assert!((0..100).all(|_| r.below(1) == 0));
    }

    #[test]
    fn sample_distinct_has_no_repeats() {
        let mut r = Rng::new(11);
        let mut s = r.sample_distinct(100, 64);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 64);
        assert!(s.iter().all(|&i| i < 100));
    }

    #[test]
    fn unit_in_range() {
        let mut r = Rng::new(5);
        assert!((0..10_000).map(|_| r.unit()).all(|u| (0.0..1.0).contains(&u)));
    }
}
