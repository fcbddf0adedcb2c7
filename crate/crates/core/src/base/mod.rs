//! Base recommenders that produce the original (unfiltered) embeddings.
//!
//! Both models predict `r̂_uv = e_uᵀ e_v` and minimize mean squared error plus
//! an L2 penalty on the embedding rows touched by each mini-batch, using Adam.

mod embedding;
mod gcn;
mod pmf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Rating, RatingStore, Split};
use crate::nn::{derive_seed, rng_from_seed, AdamConfig, AdamState, Matrix, NnError, ParamsMut};

pub use embedding::{predict_rating, EmbeddingMatrix};
pub use gcn::{train_gcn, GcnModel};
pub use pmf::{train_pmf, PmfModel};

#[derive(Debug, Error)]
pub enum BaseError {
    #[error("no training ratings")]
    EmptyTrainingSet,
    #[error("index {index} out of range ({count} available)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("invalid base config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {0}")]
    DivergenceDetected(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseModelKind {
    Pmf,
    Gcn,
}

impl BaseModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pmf => "pmf",
            Self::Gcn => "gcn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub dim: usize,
    pub gcn_layers: usize,
    /// Embeddings start uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Return the epoch with the lowest validation RMSE when a validation
    /// split exists; otherwise the final epoch.
    pub select_best_validation: bool,
    pub seed: u64,
}

impl Default for BaseTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1024,
            learning_rate: 0.005,
            l2: 1e-4,
            dim: 64,
            gcn_layers: 2,
            init_scale: 0.1,
            select_best_validation: true,
            seed: 0,
        }
    }
}

impl BaseTrainConfig {
    pub fn validate(&self) -> Result<(), BaseError> {
        let bad = |m: &str| Err(BaseError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.dim == 0 {
            return bad("batch_size and dim must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.init_scale > 0.0) {
            return bad("learning_rate and init_scale must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseEpoch {
    pub epoch: usize,
    pub train_rmse: f64,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBase {
    pub embeddings: EmbeddingMatrix,
    pub curve: Vec<BaseEpoch>,
    /// Epoch whose parameters were returned; 0 means the initialization.
    pub selected_epoch: usize,
}

/// What the shared training loop needs from a model.
pub(crate) trait RatingModel: ParamsMut + Clone {
    /// Batch objective and gradients in `param_slices` order.
    fn loss_and_grad(&self, batch: &[Rating], l2: f64) -> (f64, Vec<Matrix>);
    fn embeddings(&self) -> EmbeddingMatrix;
}

pub(crate) fn rmse_on<'a>(emb: &EmbeddingMatrix, ratings: impl Iterator<Item = &'a Rating>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in ratings {
        let d = r.value - emb.score(r.user, r.item);
        sum += d * d;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Mean squared error plus L2 over the batch, with the gradient with respect
/// to the final embeddings (`d_final`) and the penalized free rows (`d_free`).
/// The penalty is applied to `free`, which is the final embedding for PMF and
/// the layer-0 embedding for GCN.
pub(crate) fn squared_loss(
    final_emb: &Matrix,
    free: &Matrix,
    user_count: usize,
    batch: &[Rating],
    l2: f64,
) -> (f64, Matrix, Matrix) {
    let dim = final_emb.cols();
    let b = batch.len().max(1) as f64;
    let mut d_final = Matrix::zeros(final_emb.rows(), dim);
    let mut d_free = Matrix::zeros(free.rows(), dim);
    let mut loss = 0.0;
    for r in batch {
        let (u, v) = (r.user, user_count + r.item);
        let pred = crate::nn::dot(final_emb.row(u), final_emb.row(v));
        let err = pred - r.value;
        loss += err * err / b;
        let g = 2.0 * err / b;
        for k in 0..dim {
            let (eu, ev) = (final_emb[(u, k)], final_emb[(v, k)]);
            d_final[(u, k)] += g * ev;
            d_final[(v, k)] += g * eu;
        }
        if l2 > 0.0 {
            for node in [u, v] {
                let row = free.row(node);
                loss += l2 * row.iter().map(|x| x * x).sum::<f64>() / b;
                for k in 0..dim {
                    d_free[(node, k)] += 2.0 * l2 * row[k] / b;
                }
            }
        }
    }
    (loss, d_final, d_free)
}

pub(crate) fn train_loop<M: RatingModel>(mut model: M, store: &RatingStore, config: &BaseTrainConfig) -> Result<TrainedBase, BaseError> {
    config.validate()?;
    let mut train: Vec<Rating> = store.in_split(Split::Train).copied().collect();
    if train.is_empty() {
        return Err(BaseError::EmptyTrainingSet);
    }
    let has_validation = store.split_count(Split::Validation) > 0;
    let mut adam = AdamState::for_params(AdamConfig::with_learning_rate(config.learning_rate), &model);
    let mut rng = rng_from_seed(derive_seed(config.seed, 0xBA5E));
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, model.embeddings());

    for epoch in 1..=config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grad(batch, config.l2);
            if !loss.is_finite() {
                return Err(BaseError::DivergenceDetected(epoch));
            }
            let mut params = model.param_slices_mut();
            let g: Vec<&[f64]> = grads.iter().map(Matrix::as_slice).collect();
            adam.step(&mut params, &g)?;
        }
        let emb = model.embeddings();
        let train_rmse = rmse_on(&emb, train.iter()).unwrap_or(0.0);
        if !train_rmse.is_finite() {
            return Err(BaseError::DivergenceDetected(epoch));
        }
        let validation_rmse = rmse_on(&emb, store.in_split(Split::Validation));
        log::debug!("base epoch {epoch}: train rmse {train_rmse:.4} validation {validation_rmse:?}");
        if let Some(v) = validation_rmse {
            if v < best.0 {
                best = (v, epoch, emb.clone());
            }
        }
        curve.push(BaseEpoch {
            epoch,
            train_rmse,
            validation_rmse,
        });
    }

    if config.select_best_validation && has_validation && config.epochs > 0 {
        Ok(TrainedBase {
            embeddings: best.2,
            curve,
            selected_epoch: best.1,
        })
    } else {
        Ok(TrainedBase {
            embeddings: model.embeddings(),
            curve,
            selected_epoch: config.epochs,
        })
    }
}
