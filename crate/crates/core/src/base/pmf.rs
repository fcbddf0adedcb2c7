//! Probabilistic matrix factorization over free user and item vectors.

use super::{squared_loss, train_loop, BaseError, BaseTrainConfig, EmbeddingMatrix, RatingModel, TrainedBase};
use crate::data::{Rating, RatingStore};
use crate::nn::{seeded_init, InitScheme, Matrix, Params, ParamsMut};

#[derive(Debug, Clone, PartialEq)]
pub struct PmfModel {
    user_count: usize,
    item_count: usize,
    vectors: Matrix,
}

impl PmfModel {
    pub fn new(user_count: usize, item_count: usize, config: &BaseTrainConfig) -> Self {
        Self {
            user_count,
            item_count,
            vectors: seeded_init(
                user_count + item_count,
                config.dim,
                InitScheme::Uniform(config.init_scale),
                config.seed,
            ),
        }
    }

    pub fn from_embeddings(embeddings: EmbeddingMatrix) -> Self {
        Self {
            user_count: embeddings.user_count(),
            item_count: embeddings.item_count(),
            vectors: embeddings.into_matrix(),
        }
    }

    /// Batch objective `mean (r − e_uᵀe_v)² + l2 · mean(|e_u|² + |e_v|²)` and its
    /// gradient with respect to the embedding matrix.
    pub fn loss_and_grad(&self, batch: &[Rating], l2: f64) -> (f64, Matrix) {
        let (loss, mut d, d_l2) = squared_loss(&self.vectors, &self.vectors, self.user_count, batch, l2);
        d.add_assign(&d_l2).expect("same shape");
        (loss, d)
    }

    pub fn embeddings(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(self.user_count, self.item_count, self.vectors.clone())
            .expect("shape fixed at construction")
    }
}

impl Params for PmfModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.vectors.as_slice()]
    }
}

impl ParamsMut for PmfModel {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.vectors.as_mut_slice()]
    }
}

impl RatingModel for PmfModel {
    fn loss_and_grad(&self, batch: &[Rating], l2: f64) -> (f64, Vec<Matrix>) {
        let (loss, g) = PmfModel::loss_and_grad(self, batch, l2);
        (loss, vec![g])
    }

    fn embeddings(&self) -> EmbeddingMatrix {
        PmfModel::embeddings(self)
    }
}

pub fn train_pmf(store: &RatingStore, config: &BaseTrainConfig) -> Result<TrainedBase, BaseError> {
    let model = PmfModel::new(store.user_count(), store.item_count(), config);
    train_loop(model, store, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::nn::gradcheck::{central_difference, compare};
    use crate::nn::{rng_from_seed, Params};
    use rand::Rng;

    fn toy_store(seed: u64) -> RatingStore {
        let mut rng = rng_from_seed(seed);
        let mut ratings = Vec::new();
        for u in 0..10 {
            for v in 0..10 {
                if (u * 3 + v * 7) % 2 == 0 && ratings.len() < 50 {
                    let base = 1.0 + ((u + v) % 5) as f64;
                    ratings.push(Rating {
                        user: u,
                        item: v,
                        value: (base + rng.gen_range(-0.2..0.2)).clamp(1.0, 5.0),
                        split: Split::Train,
                    });
                }
            }
        }
        RatingStore::with_counts(10, 10, ratings).unwrap()
    }

    #[test]
    fn single_rating_is_fit() {
        let store = RatingStore::with_counts(
            1,
            1,
            vec![Rating {
                user: 0,
                item: 0,
                value: 3.0,
                split: Split::Train,
            }],
        )
        .unwrap();
        let config = BaseTrainConfig {
            epochs: 2000,
            l2: 0.0,
            dim: 4,
            learning_rate: 0.01,
            ..Default::default()
        };
        let trained = train_pmf(&store, &config).unwrap();
        let pred = crate::base::predict_rating(&trained.embeddings, 0, 0).unwrap();
        assert!((pred - 3.0).abs() < 0.01, "prediction {pred}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let store = toy_store(1);
        let config = BaseTrainConfig {
            epochs: 0,
            dim: 8,
            ..Default::default()
        };
        let trained = train_pmf(&store, &config).unwrap();
        let init = PmfModel::new(10, 10, &config).embeddings();
        assert_eq!(trained.embeddings, init);
        assert!(trained.curve.is_empty());
    }

    #[test]
    fn training_rmse_does_not_increase() {
        let store = toy_store(2);
        let config = BaseTrainConfig {
            epochs: 60,
            dim: 8,
            batch_size: 64,
            learning_rate: 0.002,
            l2: 0.0,
            ..Default::default()
        };
        let trained = train_pmf(&store, &config).unwrap();
        for w in trained.curve.windows(2) {
            assert!(w[1].train_rmse <= w[0].train_rmse + 1e-3, "{:?}", w);
        }
        assert!(trained.curve.last().unwrap().train_rmse < trained.curve[0].train_rmse);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let store = RatingStore::with_counts(2, 2, vec![]).unwrap();
        assert!(matches!(
            train_pmf(&store, &BaseTrainConfig::default()),
            Err(BaseError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let store = toy_store(3);
        let config = BaseTrainConfig {
            dim: 3,
            init_scale: 0.8,
            ..Default::default()
        };
        let model = PmfModel::new(10, 10, &config);
        let batch = &store.ratings()[..12];
        let (_, g) = model.loss_and_grad(batch, 0.05);
        let numeric = central_difference(&model, 1e-5, |m| m.loss_and_grad(batch, 0.05).0);
        let report = compare(&g.flatten(), &numeric);
        assert!(report.passes(1e-6), "{report:?}");
    }
}
