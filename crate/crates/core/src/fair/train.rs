use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::AdversaryGrads;
use super::{
    new_aggregator, propagate_orders, shape_error, BatchObjective, DiscriminatorBank, FairError, FairTrainConfig,
    FilterBank, SummaryConfig, SummaryVariant,
};
use crate::base::EmbeddingMatrix;
use crate::data::{AttributeTable, BipartiteAdjacency, Rating, RatingStore, Split};
use crate::nn::{derive_seed, dot, rng_from_seed, AdamConfig, AdamState, Matrix, Mlp, Params, ParamsMut};

const FILTER_STREAM: u64 = 1;
const DISCRIMINATOR_STREAM: u64 = 2;
const AGGREGATOR_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;
const SAMPLE_STREAM: u64 = 5;

/// Trained filters together with their adversaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairModel {
    pub filters: FilterBank,
    pub discriminators: DiscriminatorBank,
    /// Present for the learned summary variant.
    pub aggregator: Option<Mlp>,
    pub summary: SummaryConfig,
}

impl FairModel {
    /// Seeded initialization. Filters, discriminators and the aggregation
    /// network draw from independent streams of `config.seed`.
    pub fn initialize(
        dim: usize,
        cardinalities: &[usize],
        summary: &SummaryConfig,
        config: &FairTrainConfig,
    ) -> Result<Self, FairError> {
        summary.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.seed, FILTER_STREAM));
        let filters = FilterBank::new(cardinalities.len(), dim, &config.filter_hidden, config.leak, &mut rng)?;
        let mut rng = rng_from_seed(derive_seed(config.seed, DISCRIMINATOR_STREAM));
        let discriminators = DiscriminatorBank::new(dim, cardinalities, &config.discriminator_hidden, config.leak, &mut rng)?;
        let aggregator = if summary.variant == SummaryVariant::Learned {
            let mut rng = rng_from_seed(derive_seed(config.seed, AGGREGATOR_STREAM));
            Some(new_aggregator(summary, dim, config.leak, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            filters,
            discriminators,
            aggregator,
            summary: summary.clone(),
        })
    }

    pub fn filtered(&self, embeddings: &EmbeddingMatrix) -> Result<EmbeddingMatrix, FairError> {
        self.filters.filter_embeddings(embeddings)
    }

    /// `p_u` for every user over the whole graph: `h¹` for first order, the
    /// mean of `h¹..h^L` for value aggregation, the network output for the
    /// learned variant.
    pub fn user_summaries(&self, graph: &BipartiteAdjacency, filtered: &EmbeddingMatrix) -> Result<Matrix, FairError> {
        let prop = propagate_orders(graph, filtered.matrix(), self.summary.order)?;
        let users: Vec<usize> = (0..graph.user_count()).collect();
        match self.summary.variant {
            SummaryVariant::FirstOrder => Ok(prop.layer(1).gather_rows(&users)),
            SummaryVariant::ValueAggregation => Ok(prop.mean_aggregate().gather_rows(&users)),
            SummaryVariant::Learned => {
                let agg = self
                    .aggregator
                    .as_ref()
                    .ok_or_else(|| FairError::InvalidConfig("learned summary without an aggregation network".into()))?;
                let blocks: Vec<Matrix> = prop.layers.iter().map(|h| h.gather_rows(&users)).collect();
                let z = Matrix::hconcat(&blocks.iter().collect::<Vec<_>>())?;
                Ok(agg.predict(&z)?)
            }
        }
    }

    fn adversary_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            discriminators,
            aggregator,
            ..
        } = self;
        let mut out = discriminators.param_slices_mut();
        if let Some(a) = aggregator {
            out.extend(a.param_slices_mut());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    /// Mean over rated triples of `−(r − r̂)²`.
    pub v_r: f64,
    /// Mean over labeled users of `Σ_k ln 𝒟ᵏ(f_u)`; empty without discriminators.
    pub v_n: Option<f64>,
    pub v_s: Option<f64>,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn write_csv(&self, path: &Path) -> Result<(), FairError> {
        let io = |e: csv::Error| FairError::Nn(crate::nn::NnError::Io(std::io::Error::other(e)));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for row in &self.rows {
            w.serialize(row).map_err(io)?;
        }
        w.flush().map_err(|e| FairError::Nn(e.into()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairOutcome {
    pub model: FairModel,
    pub curve: TrainingCurve,
}

fn filtered_rmse<'a>(filtered: &EmbeddingMatrix, ratings: impl Iterator<Item = &'a Rating>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in ratings {
        let d = r.value - dot(filtered.user(r.user), filtered.item(r.item));
        sum += d * d;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Trains filters against discriminators over frozen `embeddings`.
///
/// Each mini-batch of training triples runs `discriminator_steps` adversary
/// updates and then one filter update. The returned model is the one after
/// the final epoch.
pub fn train_adversarial(
    embeddings: &EmbeddingMatrix,
    store: &RatingStore,
    attributes: &AttributeTable,
    summary: &SummaryConfig,
    config: &FairTrainConfig,
) -> Result<FairOutcome, FairError> {
    let graph = BipartiteAdjacency::build(store);
    let model = FairModel::initialize(embeddings.dim(), attributes.cardinalities(), summary, config)?;
    train_from(model, embeddings, &graph, store, attributes, config)
}

/// [`train_adversarial`] from a given starting model.
pub fn train_from(
    mut model: FairModel,
    embeddings: &EmbeddingMatrix,
    graph: &BipartiteAdjacency,
    store: &RatingStore,
    attributes: &AttributeTable,
    config: &FairTrainConfig,
) -> Result<FairOutcome, FairError> {
    config.validate()?;
    model.summary.validate()?;
    if attributes.user_count() != embeddings.user_count() || store.user_count() != embeddings.user_count() {
        return Err(shape_error(
            format!("{} users", embeddings.user_count()),
            format!("{} in attributes, {} in store", attributes.user_count(), store.user_count()),
        ));
    }
    if model.filters.dim() != embeddings.dim() || model.discriminators.cardinalities() != attributes.cardinalities() {
        return Err(shape_error("model matching embeddings and attributes", "a different shape"));
    }
    let adversarial = !config.disable_discriminators;
    if adversarial && !(0..attributes.user_count()).any(|u| attributes.row(u).iter().any(Option::is_some)) {
        return Err(FairError::NoLabeledUsers);
    }

    let mut train: Vec<Rating> = store.in_split(Split::Train).copied().collect();
    let mut filter_adam = AdamState::for_params(AdamConfig::with_learning_rate(config.filter_learning_rate), &model.filters);
    let adversary_shapes: Vec<usize> = model.adversary_slices_mut().iter().map(|s| s.len()).collect();
    let mut adversary_adam = AdamState::new(AdamConfig::with_learning_rate(config.discriminator_learning_rate), &adversary_shapes);
    let mut shuffle_rng = rng_from_seed(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut sample_rng = rng_from_seed(derive_seed(config.seed, SAMPLE_STREAM));
    let lambda = if adversarial { config.lambda } else { 0.0 };
    let mut curve = TrainingCurve::default();
    let summary = model.summary.clone();

    for epoch in 1..=config.epochs {
        let diverged = |e: FairError| match e {
            FairError::DivergenceDetected(_) => FairError::DivergenceDetected(epoch),
            other => other,
        };
        train.shuffle(&mut shuffle_rng);
        let (mut v_r, mut n_r) = (0.0, 0usize);
        let (mut v_n, mut v_s, mut n_adv) = (0.0, 0.0, 0usize);
        for batch in train.chunks(config.batch_size) {
            let objective = BatchObjective::new(
                embeddings,
                graph,
                attributes,
                &summary,
                batch,
                config.neighbor_cap,
                adversarial,
                &mut sample_rng,
            );
            if adversarial && config.discriminator_steps > 0 && !objective.labeled_users().is_empty() {
                let first = objective
                    .discriminator_steps(&mut model, config.discriminator_steps, |m, grads: &AdversaryGrads| {
                        let mut params = m.adversary_slices_mut();
                        adversary_adam.step(&mut params, &grads.param_slices())?;
                        Ok(())
                    })
                    .map_err(diverged)?;
                if let Some(values) = first {
                    v_n -= values.node_ce;
                    v_s -= values.summary_ce;
                    n_adv += 1;
                }
            }
            if !config.freeze_filters {
                let (values, grads) = objective.filter_phase(&model, lambda)?;
                if !values.is_finite() {
                    return Err(FairError::DivergenceDetected(epoch));
                }
                v_r -= values.mse * batch.len() as f64;
                n_r += batch.len();
                let mut params = model.filters.param_slices_mut();
                filter_adam.step(&mut params, &grads.param_slices())?;
            }
        }
        let filtered = model.filtered(embeddings)?;
        if config.freeze_filters {
            if let Some(rmse) = filtered_rmse(&filtered, train.iter()) {
                v_r = -rmse * rmse;
                n_r = 1;
            }
        }
        let validation_rmse = filtered_rmse(&filtered, store.in_split(Split::Validation));
        let row = CurveRow {
            epoch,
            v_r: if n_r > 0 { v_r / n_r as f64 } else { 0.0 },
            v_n: (n_adv > 0).then(|| v_n / n_adv as f64),
            v_s: (n_adv > 0).then(|| v_s / n_adv as f64),
            validation_rmse,
        };
        log::debug!("fair epoch {epoch}: {row:?}");
        curve.rows.push(row);
    }
    Ok(FairOutcome { model, curve })
}
