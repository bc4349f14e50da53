//! Deterministic seed generation and seeded random draws.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kinematics::{JointConfig, JointLimits, KinematicChain, TaskPoint};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed for item `index` of a seeded batch.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` stratified configurations inside `limits`.
///
/// Each joint axis is split into `count` strata; seed `k` takes stratum
/// `(k * (2i + 1)) mod count` on joint `i`, which is a permutation whenever
/// `count` is a power of two, so every stratum of every joint is used once.
pub fn stratified_seeds(limits: &JointLimits, count: usize) -> Vec<JointConfig> {
    let n = limits.dim();
    (0..count)
        .map(|k| {
            JointConfig::from(DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let stratum = (k * (2 * i + 1)) % count;
                    let t = (stratum as f64 + 0.5) / count as f64;
                    limits.lower()[i] + (limits.upper()[i] - limits.lower()[i]) * t
                }),
            ))
        })
        .collect()
}

pub fn uniform_in_limits<R: Rng>(rng: &mut R, limits: &JointLimits) -> JointConfig {
    let n = limits.dim();
    JointConfig::from(DVector::from_iterator(n, (0..n).map(|i| rng.gen_range(limits.lower()[i]..=limits.upper()[i]))))
}

/// Rejection sample of a task point uniformly distributed over the
/// workspace shell `inner < ||p - base|| < outer`.
pub fn uniform_in_shell<R: Rng>(rng: &mut R, chain: &KinematicChain, inner: f64, outer: f64) -> TaskPoint {
    let dim = chain.task_dim();
    loop {
        let offset = DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-outer..=outer)));
        let r = offset.norm();
        if r > inner && r < outer {
            return TaskPoint::from(&**chain.base() + offset);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_seeds_cover_every_stratum() {
        let limits = JointLimits::upper_limb();
        let seeds = stratified_seeds(&limits, 8);
        assert_eq!(seeds.len(), 8);
        for i in 0..4 {
            let mut strata: Vec<usize> = seeds
                .iter()
                .map(|s| {
                    let t = (s[i] - limits.lower()[i]) / (limits.upper()[i] - limits.lower()[i]);
                    (t * 8.0).floor() as usize
                })
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
        assert!(seeds.iter().all(|s| limits.contains(s, 0.0)));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn shell_samples_stay_in_shell() {
        let chain = KinematicChain::planar_default();
        let mut r = rng(3);
        for _ in 0..200 {
            let p = uniform_in_shell(&mut r, &chain, 0.2, 1.8);
            let d = p.norm();
            assert!(d > 0.2 && d < 1.8);
        }
    }
}
