//! Instance generators and seed derivation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::envyfree::min_payments;
use crate::instance::{normalize, BudgetedInstance, PositionEnvironment};
use crate::{Error, Result};

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of trial `trial` under `master`: the first word of stream `trial`
/// of the master generator, so trials never share randomness and any trial
/// can be replayed from its own seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

/// The lower-bound instance for the welfare approximation: values
/// `(N³, N, …, N, N − ε)` with `N − 1` copies of `N`, one item, budget 1.
pub fn tight_instance(big_n: usize, eps: f64) -> Result<BudgetedInstance> {
    if big_n < 2 {
        return Err(Error::InvalidArgument(format!(
            "the tight instance needs N >= 2, got {big_n}"
        )));
    }
    let nf = big_n as f64;
    if !(eps >= 0.0 && eps < nf) {
        return Err(Error::InvalidArgument(format!("eps {eps} must lie in [0, N)")));
    }
    let mut values = vec![nf * nf * nf];
    values.extend(std::iter::repeat_n(nf, big_n - 1));
    values.push(nf - eps);
    let env = PositionEnvironment::single_item(values.len());
    normalize(&values, env.weights(), 1.0)
}

/// Value distributions for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Values uniform on `[0, 1)`.
    Uniform,
    /// Values exponential with unit mean.
    Exponential,
}

/// A random instance: values from `family`, weights sorted uniforms with
/// the top weight set to 1, and a budget uniform on `[0, 1.25 · B_1]` so
/// that every regime of the budget is exercised.
pub fn random_instance<R: Rng + ?Sized>(family: Family, n: usize, rng: &mut R) -> BudgetedInstance {
    let values: Vec<f64> = (0..n)
        .map(|_| match family {
            Family::Uniform => rng.random::<f64>(),
            Family::Exponential => Exp1.sample(rng),
        })
        .collect();
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    if let Some(top) = weights.first_mut() {
        *top = 1.0;
    }
    let unbounded = normalize(&values, &weights, f64::INFINITY).expect("generated entries are valid");
    let top_payment = min_payments(unbounded.values(), unbounded.weights())
        .expect("weights are sorted")
        .first()
        .copied()
        .unwrap_or(0.0);
    let budget = 1.25 * top_payment.max(0.05) * rng.random::<f64>();
    normalize(&values, &weights, budget).expect("generated entries are valid")
}

/// [`random_instance`] seeded directly.
pub fn seeded_instance(family: Family, n: usize, seed: u64) -> BudgetedInstance {
    random_instance(family, n, &mut rng_from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_instance_shape() {
        let i = tight_instance(3, 1e-6).unwrap();
        assert_eq!(i.values(), &[27.0, 3.0, 3.0, 3.0 - 1e-6]);
        assert_eq!(i.weights(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(i.budget(), 1.0);
        assert!(tight_instance(1, 1e-6).is_err());
        assert!(tight_instance(3, -1.0).is_err());
    }

    #[test]
    fn seeded_instances_are_reproducible() {
        let a = seeded_instance(Family::Uniform, 8, 7);
        let b = seeded_instance(Family::Uniform, 8, 7);
        assert_eq!(a, b);
        assert_ne!(a, seeded_instance(Family::Uniform, 8, 8));
        let e = seeded_instance(Family::Exponential, 5, 1);
        assert_eq!(e.len(), 5);
        assert_eq!(e.weights()[0], 1.0);
    }

    #[test]
    fn trial_seeds_differ_by_stream() {
        let seeds: Vec<u64> = (0..100).map(|t| trial_seed(42, t)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_eq!(trial_seed(42, 3), seeds[3]);
        assert_ne!(trial_seed(43, 3), seeds[3]);
    }
}
