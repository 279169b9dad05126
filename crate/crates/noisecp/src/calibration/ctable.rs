//! The constant `c(n) = E[sup_i (i/n - U_(i))]` for sorted uniforms.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;
use rand_distr::Exp1;

use crate::seed;

pub const DEFAULT_REPS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed_c7ab;

/// Monte Carlo estimate of `c(n)`. Sorted uniforms are generated from
/// normalized partial sums of `n + 1` standard exponentials.
pub fn monte_carlo_c<R: Rng + ?Sized>(n: usize, reps: usize, rng: &mut R) -> f64 {
    assert!(n >= 1 && reps >= 1, "n and reps must be positive");
    let mut partial = vec![0.0f64; n];
    let nf = n as f64;
    let mut total = 0.0;
    for _ in 0..reps {
        let mut acc = 0.0;
        for p in partial.iter_mut() {
            acc += rng.sample::<f64, _>(Exp1);
            *p = acc;
        }
        let norm = acc + rng.sample::<f64, _>(Exp1);
        let sup = partial
            .iter()
            .enumerate()
            .map(|(i, s)| (i + 1) as f64 / nf - s / norm)
            .fold(f64::MIN, f64::max);
        total += sup;
    }
    total / reps as f64
}

/// Read-through cache of `c(n)`. Each entry is computed from a stream derived
/// from `(seed, n)`, so values do not depend on the order of requests.
#[derive(Debug)]
pub struct CTable {
    reps: usize,
    seed: u64,
    cache: RwLock<HashMap<usize, f64>>,
}

impl Default for CTable {
    fn default() -> Self {
        Self::new(DEFAULT_REPS, DEFAULT_SEED)
    }
}

impl CTable {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self { reps: reps.max(1), seed, cache: RwLock::new(HashMap::new()) }
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn get(&self, n: usize) -> f64 {
        if let Some(&c) = self.cache.read().expect("ctable lock").get(&n) {
            return c;
        }
        let mut rng = seed::stream(self.seed, n as u64, "ctable");
        let c = monte_carlo_c(n.max(1), self.reps, &mut rng);
        *self.cache.write().expect("ctable lock").entry(n).or_insert(c)
    }

    /// Stores a precomputed value, replacing any cached one.
    pub fn insert(&self, n: usize, c: f64) {
        self.cache.write().expect("ctable lock").insert(n, c);
    }

    /// Cached entries in increasing `n`.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self.cache.read().expect("ctable lock").iter().map(|(&n, &c)| (n, c)).collect();
        v.sort_by_key(|e| e.0);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sorted_uniform_c(n: usize, reps: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut total = 0.0;
        for _ in 0..reps {
            let mut u: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            u.sort_by(f64::total_cmp);
            total += u.iter().enumerate().map(|(i, x)| (i + 1) as f64 / n as f64 - x).fold(f64::MIN, f64::max);
        }
        total / reps as f64
    }

    #[test]
    fn single_point_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((monte_carlo_c(1, 200_000, &mut rng) - 0.5).abs() < 0.005);
    }

    #[test]
    fn agrees_with_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = monte_carlo_c(50, 40_000, &mut rng);
        let b = sorted_uniform_c(50, 40_000, &mut rng);
        assert!((a - b).abs() < 0.002, "{a} vs {b}");
    }

    #[test]
    fn hundred_in_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = monte_carlo_c(100, 100_000, &mut rng);
        assert!((0.03..=0.10).contains(&c), "{c}");
    }

    #[test]
    fn seeded_single_rep() {
        let a = monte_carlo_c(10, 1, &mut ChaCha8Rng::seed_from_u64(9));
        let b = monte_carlo_c(10, 1, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn table_is_order_independent() {
        let t1 = CTable::new(500, 4);
        let t2 = CTable::new(500, 4);
        let a = (t1.get(10), t1.get(20));
        let b = (t2.get(20), t2.get(10));
        assert_eq!(a, (b.1, b.0));
        t1.insert(7, 0.25);
        assert_eq!(t1.get(7), 0.25);
        assert_eq!(t1.entries().len(), 3);
        assert!(t1.get(10) > 0.0);
    }
}
