use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::DescriptorMatrix;

/// Seeded RNG used throughout the crate; ChaCha keeps streams stable across platforms.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Picks `count` of `total` indices uniformly without replacement, returned in
/// ascending order. When `count >= total` every index is returned.
pub fn sample_indices(total: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    let mut idx = rand::seq::index::sample(&mut rng(seed), total, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Uniform row subsample of `m` (all rows when `count >= m.rows()`).
pub fn sample_rows(m: &DescriptorMatrix, count: usize, seed: u64) -> DescriptorMatrix {
    if count >= m.rows() {
        return m.clone();
    }
    m.select_rows(&sample_indices(m.rows(), count, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_distinct_sorted_and_seeded() {
        let a = sample_indices(1000, 100, 3);
        assert_eq!(a.len(), 100);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_indices(1000, 100, 3));
        assert_ne!(a, sample_indices(1000, 100, 4));
        assert_eq!(sample_indices(5, 10, 0), vec![0, 1, 2, 3, 4]);
    }
}
