//! Seeded random splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, RatingStore, Split};
use crate::nn::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    /// MovieLens-style train:test.
    pub fn train_test(train: f64, test: f64) -> Self {
        Self {
            train,
            validation: 0.0,
            test,
        }
    }

    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        Self { train, validation, test }
    }

    fn check(&self) -> Result<(), DataError> {
        let parts = [self.train, self.validation, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::RatioSumInvalid(parts.to_vec()));
        }
        Ok(())
    }
}

/// Shuffles all triples with `seed` and tags the first `round(n·train)` as
/// train, the next `round(n·validation)` as validation, the rest as test.
pub fn split_ratings(store: &RatingStore, ratios: SplitRatios, seed: u64) -> Result<RatingStore, DataError> {
    ratios.check()?;
    let n = store.len();
    let n_train = ((n as f64) * ratios.train).round() as usize;
    let n_val = (((n as f64) * ratios.validation).round() as usize).min(n - n_train.min(n));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut tags = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        tags[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    store.with_splits(tags)
}

/// Re-tags `round(fraction · |train|)` randomly chosen training triples as
/// validation.
pub fn carve_validation(store: &RatingStore, fraction: f64, seed: u64) -> Result<RatingStore, DataError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::RatioSumInvalid(vec![fraction]));
    }
    let mut train: Vec<usize> = store
        .ratings()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let k = ((train.len() as f64) * fraction).round() as usize;
    train.shuffle(&mut rng_from_seed(seed));
    let mut tags: Vec<Split> = store.ratings().iter().map(|r| r.split).collect();
    for &i in &train[..k] {
        tags[i] = Split::Validation;
    }
    store.with_splits(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use proptest::prelude::*;

    fn store(n: usize) -> RatingStore {
        let ratings = (0..n)
            .map(|i| Rating {
                user: i % 7,
                item: i,
                value: 1.0 + (i % 5) as f64,
                split: Split::Train,
            })
            .collect();
        RatingStore::with_counts(7, n, ratings).unwrap()
    }

    #[test]
    fn nine_to_one() {
        let s = split_ratings(&store(10), SplitRatios::train_test(0.9, 0.1), 1).unwrap();
        assert_eq!(s.split_count(Split::Train), 9);
        assert_eq!(s.split_count(Split::Validation), 0);
        assert_eq!(s.split_count(Split::Test), 1);
    }

    #[test]
    fn seven_one_two() {
        let s = split_ratings(&store(10), SplitRatios::new(0.7, 0.1, 0.2), 1).unwrap();
        assert_eq!(s.split_count(Split::Train), 7);
        assert_eq!(s.split_count(Split::Validation), 1);
        assert_eq!(s.split_count(Split::Test), 2);
    }

    #[test]
    fn same_seed_same_assignment() {
        let a = split_ratings(&store(100), SplitRatios::new(0.7, 0.1, 0.2), 5).unwrap();
        let b = split_ratings(&store(100), SplitRatios::new(0.7, 0.1, 0.2), 5).unwrap();
        let c = split_ratings(&store(100), SplitRatios::new(0.7, 0.1, 0.2), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert!(matches!(
            split_ratings(&store(10), SplitRatios::new(0.7, 0.1, 0.1), 1),
            Err(DataError::RatioSumInvalid(_))
        ));
        assert!(split_ratings(&store(10), SplitRatios::new(1.2, -0.2, 0.0), 1).is_err());
    }

    #[test]
    fn carve_moves_a_fraction_of_train() {
        let s = split_ratings(&store(200), SplitRatios::train_test(0.9, 0.1), 1).unwrap();
        let c = carve_validation(&s, 0.05, 2).unwrap();
        assert_eq!(c.split_count(Split::Validation), 9);
        assert_eq!(c.split_count(Split::Train), 171);
        assert_eq!(c.split_count(Split::Test), 20);
    }

    proptest! {
        #[test]
        fn split_is_a_partition_matching_ratios(n in 1usize..300, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in 0u64..1000) {
            let (train, rest) = (a, 1.0 - a);
            let ratios = SplitRatios::new(train, rest * b, (1.0 - train - rest * b).max(0.0));
            let s = split_ratings(&store(n), ratios, seed).unwrap();
            let t = s.split_count(Split::Train);
            let v = s.split_count(Split::Validation);
            let e = s.split_count(Split::Test);
            prop_assert_eq!(t + v + e, n);
            prop_assert!((t as f64 - n as f64 * ratios.train).abs() <= 1.0);
            prop_assert!((v as f64 - n as f64 * ratios.validation).abs() <= 1.0);
            prop_assert!((e as f64 - n as f64 * ratios.test).abs() <= 2.0);
        }
    }
}
