//! Graph-based adversarial filtering of frozen recommender embeddings.
//!
//! Each sensitive attribute `k` owns a filter `ℱᵏ: R^D → R^D` and a
//! discriminator `𝒟ᵏ: R^D → R^{C_k}`. Filtered embeddings are the mean of the
//! sub-filter outputs, `f_i = (1/K) Σ_k ℱᵏ(e_i)`, and ratings are predicted as
//! `f_uᵀ f_v`. The filters play against the discriminators on the value
//! function `V = V_R − λ (V_N + V_S)`:
//!
//! - `V_R = −Σ (r_uv − f_uᵀf_v)²` over rated pairs,
//! - `V_N = Σ_k ln 𝒟ᵏ(f_u)[x_uk]` on each user's own filtered vector,
//! - `V_S`, the same log-likelihood on a summary `p_u` of the user's
//!   ego-centric graph in the filtered space (see [`SummaryVariant`]).
//!
//! Discriminators maximize `V_N + V_S`; filters maximize `V`.

mod discriminators;
mod filters;
mod objective;
mod plan;
mod summary;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NnError, DEFAULT_LEAK};

pub use discriminators::{node_value, DiscriminatorBank};
pub use filters::{apply_filters, predict_filtered, FilterBank};
pub use objective::{AdversaryGrads, BatchObjective, ObjectiveValues};
pub use summary::{
    graph_value, learned_aggregation, new_aggregator, propagate_orders, rating_value, summarize_first_order,
    Propagation, UserSummary,
};
pub use train::{train_adversarial, train_from, CurveRow, FairModel, FairOutcome, TrainingCurve};

#[derive(Debug, Error)]
pub enum FairError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("user has no label for any configured attribute")]
    MissingAttribute,
    #[error("no user carries a label for any configured attribute")]
    NoLabeledUsers,
    #[error("non-finite loss at epoch {0}")]
    DivergenceDetected(usize),
    #[error("invalid fair config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub(crate) fn shape_error(expected: impl ToString, found: impl ToString) -> FairError {
    FairError::ShapeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// How a user's ego-centric graph is summarized before the discriminators
/// score it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryVariant {
    /// `p_u` is the rating-weighted mean of the filtered item neighbors.
    FirstOrder,
    /// `V_S = Σ_l λ_l V^l_S`, each order scored separately.
    ValueAggregation,
    /// `p_u = MLP(h¹ ‖ … ‖ h^L)`.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub variant: SummaryVariant,
    pub order: usize,
    /// `λ_l` per order; only read by value aggregation.
    pub layer_weights: Vec<f64>,
    /// Hidden widths of the aggregation MLP; empty means `[D, D]`.
    pub aggregator_hidden: Vec<usize>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self::first_order()
    }
}

impl SummaryConfig {
    pub fn first_order() -> Self {
        Self {
            variant: SummaryVariant::FirstOrder,
            order: 1,
            layer_weights: vec![1.0],
            aggregator_hidden: Vec::new(),
        }
    }

    pub fn value_aggregation(layer_weights: Vec<f64>) -> Self {
        Self {
            variant: SummaryVariant::ValueAggregation,
            order: layer_weights.len(),
            layer_weights,
            aggregator_hidden: Vec::new(),
        }
    }

    pub fn learned(order: usize) -> Self {
        Self {
            variant: SummaryVariant::Learned,
            order,
            layer_weights: vec![1.0; order],
            aggregator_hidden: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), FairError> {
        let bad = |m: String| Err(FairError::InvalidConfig(m));
        if self.order == 0 {
            return bad("summary order must be at least 1".into());
        }
        match self.variant {
            SummaryVariant::FirstOrder if self.order != 1 => bad(format!("first-order summary with order {}", self.order)),
            SummaryVariant::ValueAggregation if self.layer_weights.len() != self.order => bad(format!(
                "{} layer weights for order {}",
                self.layer_weights.len(),
                self.order
            )),
            _ if self.layer_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) => {
                bad(format!("layer weights must be finite and non-negative: {:?}", self.layer_weights))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn aggregator_sizes(&self, dim: usize) -> Vec<usize> {
        let mut sizes = vec![self.order * dim];
        if self.aggregator_hidden.is_empty() {
            sizes.extend([dim, dim]);
        } else {
            sizes.extend(&self.aggregator_hidden);
        }
        sizes.push(dim);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairTrainConfig {
    /// Balance `λ` between rating accuracy and the adversarial terms.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub filter_learning_rate: f64,
    pub discriminator_learning_rate: f64,
    /// Discriminator updates before each filter update.
    pub discriminator_steps: usize,
    pub filter_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leak: f64,
    /// Neighbors sampled per node and hop when building batch summaries.
    pub neighbor_cap: usize,
    /// Train without discriminators: the filters see only the rating loss.
    pub disable_discriminators: bool,
    /// Skip filter updates; discriminators still train.
    pub freeze_filters: bool,
    pub seed: u64,
}

impl Default for FairTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epochs: 30,
            batch_size: 1024,
            filter_learning_rate: 0.005,
            discriminator_learning_rate: 0.005,
            discriminator_steps: 1,
            filter_hidden: vec![128, 64],
            discriminator_hidden: vec![16, 8],
            leak: DEFAULT_LEAK,
            neighbor_cap: 512,
            disable_discriminators: false,
            freeze_filters: false,
            seed: 0,
        }
    }
}

impl FairTrainConfig {
    /// Architecture used for Lastfm-360K: deeper filters and discriminators,
    /// `λ = 0.2`.
    pub fn lastfm() -> Self {
        Self {
            lambda: 0.2,
            filter_hidden: vec![128, 64, 32],
            discriminator_hidden: vec![16, 8, 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FairError> {
        let bad = |m: &str| Err(FairError::InvalidConfig(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.neighbor_cap == 0 {
            return bad("batch_size and neighbor_cap must be positive");
        }
        if !(self.filter_learning_rate > 0.0 && self.discriminator_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return bad("leak must lie in (0, 1)");
        }
        Ok(())
    }
}
