//! Shared benchmark inputs.

use ipv_core::pipeline::Prepared;
use ipv_core::solver::{planted_instance, Planted};
use ipv_core::sweep::instance;
use ipv_core::BlockSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Planted instance with one `n x n` PSD block, a diagonal block of size
/// `n / 4` and `2n` constraints.
pub fn planted(n: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = [BlockSpec::psd(n), BlockSpec::diagonal((n / 4).max(1))];
    planted_instance(&blocks, 2 * n, 0.3, &mut rng)
}

/// Sweep instance of the given depth (width 8, input dim 4), prepared at radius 0.05.
pub fn prepared(depth: usize, seed: u64) -> Prepared {
    let inst = instance(depth, seed, 8, 4, 3, 0.05).expect("instance");
    Prepared::new(&inst.net, &inst.center, 0.05, true, false).expect("prepared")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_build() {
        assert_eq!(planted(8, 0).problem.constraints.len(), 16);
        assert!(prepared(2, 0).net.depth() == 2);
    }
}
