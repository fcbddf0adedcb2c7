//! Mini-batch losses and hand-written gradients for both players.
//!
//! With `B` rated triples, `U` the distinct labeled users of the batch and
//! `S ⊆ U` those with training neighbors, the batch losses are
//!
//! - `mse = (1/B) Σ (r − f_uᵀf_v)²`
//! - `ce_N = (1/|U|) Σ_u Σ_k CE(𝒟ᵏ(f_u), x_uk)`
//! - `ce_S = (1/|S|) Σ_u Σ_k CE(𝒟ᵏ(p_u), x_uk)`, or `Σ_l λ_l` of the per-order
//!   terms for value aggregation.
//!
//! The filter phase minimizes `mse − λ (ce_N + ce_S)`, the mean form of
//! maximizing `V_R − λ (V_N + V_S)`. The discriminator phase minimizes
//! `ce_N + ce_S` over discriminators and the aggregation network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::plan::{row_of, PropagationPlan};
use super::{FairError, FairModel, SummaryConfig, SummaryVariant};
use crate::base::EmbeddingMatrix;
use crate::data::{AttributeTable, BipartiteAdjacency, Rating};
use crate::nn::{dot, Matrix, MlpCache, MlpGrads, Params};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveValues {
    pub mse: f64,
    pub node_ce: f64,
    pub summary_ce: f64,
}

impl ObjectiveValues {
    pub fn is_finite(&self) -> bool {
        self.mse.is_finite() && self.node_ce.is_finite() && self.summary_ce.is_finite()
    }
}

/// Gradients of the discriminator-phase loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryGrads {
    pub discriminators: Vec<MlpGrads>,
    pub aggregator: Option<MlpGrads>,
}

impl Params for AdversaryGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.discriminators.param_slices();
        if let Some(a) = &self.aggregator {
            out.extend(a.param_slices());
        }
        out
    }
}

struct FilterState {
    base: Matrix,
    caches: Vec<MlpCache>,
    levels: Vec<Matrix>,
}

struct AdversaryTerms {
    node_ce: f64,
    summary_ce: f64,
    grads: AdversaryGrads,
    d_base: Matrix,
    d_levels: Vec<Matrix>,
}

/// One mini-batch with its propagation plan.
pub struct BatchObjective<'a> {
    embeddings: &'a EmbeddingMatrix,
    attributes: &'a AttributeTable,
    summary: &'a SummaryConfig,
    ratings: &'a [Rating],
    /// Sorted batch users with at least one label.
    labeled: Vec<usize>,
    /// Sorted nodes appearing in the rated pairs.
    rating_nodes: Vec<usize>,
    plan: PropagationPlan,
}

impl<'a> BatchObjective<'a> {
    /// Prepares a batch. With `with_summaries` false no graph summaries are
    /// planned and only the rating loss is available.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        embeddings: &'a EmbeddingMatrix,
        graph: &BipartiteAdjacency,
        attributes: &'a AttributeTable,
        summary: &'a SummaryConfig,
        ratings: &'a [Rating],
        neighbor_cap: usize,
        with_summaries: bool,
        rng: &mut R,
    ) -> Self {
        let m = embeddings.user_count();
        let mut rating_nodes: Vec<usize> = ratings.iter().flat_map(|r| [r.user, m + r.item]).collect();
        rating_nodes.sort_unstable();
        rating_nodes.dedup();
        let (labeled, plan) = if with_summaries {
            let mut labeled: Vec<usize> = ratings
                .iter()
                .map(|r| r.user)
                .filter(|&u| attributes.row(u).iter().any(Option::is_some))
                .collect();
            labeled.sort_unstable();
            labeled.dedup();
            let plan = PropagationPlan::build(graph, &labeled, &rating_nodes, summary.order, neighbor_cap, rng);
            (labeled, plan)
        } else {
            let plan = PropagationPlan::build(graph, &[], &rating_nodes, 0, neighbor_cap, rng);
            (Vec::new(), plan)
        };
        Self {
            embeddings,
            attributes,
            summary,
            ratings,
            labeled,
            rating_nodes,
            plan,
        }
    }

    pub fn labeled_users(&self) -> &[usize] {
        &self.labeled
    }

    fn filter_forward(&self, model: &FairModel, nodes: &[usize], with_levels: bool) -> Result<FilterState, FairError> {
        let x = self.embeddings.matrix().gather_rows(nodes);
        let (base, caches) = model.filters.forward(&x)?;
        let levels = if with_levels { self.plan.forward(&base) } else { Vec::new() };
        Ok(FilterState { base, caches, levels })
    }

    fn mse(&self, nodes: &[usize], base: &Matrix) -> (f64, Matrix) {
        let m = self.embeddings.user_count();
        let b = self.ratings.len().max(1) as f64;
        let mut grad = Matrix::zeros(base.rows(), base.cols());
        let mut loss = 0.0;
        for r in self.ratings {
            let (iu, iv) = (row_of(nodes, r.user), row_of(nodes, m + r.item));
            let err = dot(base.row(iu), base.row(iv)) - r.value;
            loss += err * err / b;
            let g = 2.0 * err / b;
            for k in 0..base.cols() {
                let (fu, fv) = (base[(iu, k)], base[(iv, k)]);
                grad.row_mut(iu)[k] += g * fv;
                grad.row_mut(iv)[k] += g * fu;
            }
        }
        (loss, grad)
    }

    /// Cross-entropy of every discriminator on the rows `rows` of `x`, where
    /// `users[i]` owns `rows[i]`. Accumulates parameter and input gradients.
    fn score_rows(
        &self,
        model: &FairModel,
        x: &Matrix,
        users: &[usize],
        rows: &[usize],
        scale: f64,
        grads: &mut [MlpGrads],
        d_x: &mut Matrix,
    ) -> Result<f64, FairError> {
        let mut loss = 0.0;
        for k in 0..model.discriminators.len() {
            let (mut sel, mut labels) = (Vec::new(), Vec::new());
            for (&u, &row) in users.iter().zip(rows) {
                if let Some(c) = self.attributes.value(u, k) {
                    sel.push(row);
                    labels.push(c);
                }
            }
            if sel.is_empty() {
                continue;
            }
            let (l, g, dx) = model.discriminators.cross_entropy(k, &x.gather_rows(&sel), &labels, scale)?;
            loss += l;
            grads[k].add_assign(&g)?;
            for (i, &row) in sel.iter().enumerate() {
                crate::nn::axpy(d_x.row_mut(row), 1.0, dx.row(i));
            }
        }
        Ok(loss)
    }

    fn adversary_terms(&self, model: &FairModel, state: &FilterState) -> Result<AdversaryTerms, FairError> {
        let mut disc_grads: Vec<MlpGrads> = model.discriminators.nets().iter().map(|n| n.zero_grads()).collect();
        let mut d_base = Matrix::zeros(state.base.rows(), state.base.cols());
        let mut d_levels: Vec<Matrix> = state.levels.iter().map(|h| Matrix::zeros(h.rows(), h.cols())).collect();
        let mut agg_grads = None;

        let mut node_ce = 0.0;
        if !self.labeled.is_empty() {
            let rows: Vec<usize> = self.labeled.iter().map(|&u| row_of(&self.plan.base, u)).collect();
            let scale = 1.0 / self.labeled.len() as f64;
            node_ce = self.score_rows(model, &state.base, &self.labeled, &rows, scale, &mut disc_grads, &mut d_base)?;
        }

        let users: Vec<usize> = self
            .labeled
            .iter()
            .copied()
            .filter(|u| self.plan.users.binary_search(u).is_ok())
            .collect();
        let mut summary_ce = 0.0;
        if !users.is_empty() && !state.levels.is_empty() {
            let scale = 1.0 / users.len() as f64;
            let rows: Vec<Vec<usize>> = users.iter().map(|&u| self.plan.user_rows(u)).collect();
            let level_rows = |l: usize| -> Vec<usize> { rows.iter().map(|r| r[l]).collect() };
            match self.summary.variant {
                SummaryVariant::FirstOrder => {
                    let r0 = level_rows(0);
                    summary_ce = self.score_rows(model, &state.levels[0], &users, &r0, scale, &mut disc_grads, &mut d_levels[0])?;
                }
                SummaryVariant::ValueAggregation => {
                    for (l, &w) in self.summary.layer_weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let rl = level_rows(l);
                        summary_ce += self.score_rows(model, &state.levels[l], &users, &rl, w * scale, &mut disc_grads, &mut d_levels[l])?;
                    }
                }
                SummaryVariant::Learned => {
                    let agg = model
                        .aggregator
                        .as_ref()
                        .ok_or_else(|| FairError::InvalidConfig("learned summary without an aggregation network".into()))?;
                    let blocks: Vec<Matrix> = (0..state.levels.len()).map(|l| state.levels[l].gather_rows(&level_rows(l))).collect();
                    let z = Matrix::hconcat(&blocks.iter().collect::<Vec<_>>())?;
                    let (p, cache) = agg.forward(&z)?;
                    let identity: Vec<usize> = (0..users.len()).collect();
                    let mut d_p = Matrix::zeros(p.rows(), p.cols());
                    summary_ce = self.score_rows(model, &p, &users, &identity, scale, &mut disc_grads, &mut d_p)?;
                    let (g, d_z) = agg.backward(&cache, &d_p)?;
                    for (l, d_block) in d_z.hsplit(p.cols()).into_iter().enumerate() {
                        for (i, &row) in level_rows(l).iter().enumerate() {
                            crate::nn::axpy(d_levels[l].row_mut(row), 1.0, d_block.row(i));
                        }
                    }
                    agg_grads = Some(g);
                }
            }
        }
        if model.summary.variant == SummaryVariant::Learned && agg_grads.is_none() {
            agg_grads = model.aggregator.as_ref().map(|a| a.zero_grads());
        }
        Ok(AdversaryTerms {
            node_ce,
            summary_ce,
            grads: AdversaryGrads {
                discriminators: disc_grads,
                aggregator: agg_grads,
            },
            d_base,
            d_levels,
        })
    }

    /// Loss `mse − λ (ce_N + ce_S)` and its gradient for every filter. With
    /// `λ = 0` only the rated nodes are filtered and no summaries are formed.
    pub fn filter_phase(&self, model: &FairModel, lambda: f64) -> Result<(ObjectiveValues, Vec<MlpGrads>), FairError> {
        if lambda == 0.0 || self.plan.levels.is_empty() && self.labeled.is_empty() {
            let state = self.filter_forward(model, &self.rating_nodes, false)?;
            let (mse, d_base) = self.mse(&self.rating_nodes, &state.base);
            let grads = model.filters.backward(&state.caches, &d_base)?;
            return Ok((
                ObjectiveValues {
                    mse,
                    ..Default::default()
                },
                grads,
            ));
        }
        let state = self.filter_forward(model, &self.plan.base, true)?;
        let (mse, mut d_base) = self.mse(&self.plan.base, &state.base);
        let adv = self.adversary_terms(model, &state)?;
        add_scaled(&mut d_base, -lambda, &adv.d_base);
        let d_levels = adv
            .d_levels
            .into_iter()
            .map(|mut d| {
                d.scale(-lambda);
                d
            })
            .collect();
        self.plan.backward(d_levels, &mut d_base);
        let grads = model.filters.backward(&state.caches, &d_base)?;
        Ok((
            ObjectiveValues {
                mse,
                node_ce: adv.node_ce,
                summary_ce: adv.summary_ce,
            },
            grads,
        ))
    }

    /// Loss `ce_N + ce_S` and its gradient for the discriminators and the
    /// aggregation network.
    pub fn discriminator_phase(&self, model: &FairModel) -> Result<(ObjectiveValues, AdversaryGrads), FairError> {
        let state = self.filter_forward(model, &self.plan.base, true)?;
        self.discriminator_phase_with(model, &state)
    }

    fn discriminator_phase_with(&self, model: &FairModel, state: &FilterState) -> Result<(ObjectiveValues, AdversaryGrads), FairError> {
        let adv = self.adversary_terms(model, state)?;
        let (mse, _) = self.mse(&self.plan.base, &state.base);
        Ok((
            ObjectiveValues {
                mse,
                node_ce: adv.node_ce,
                summary_ce: adv.summary_ce,
            },
            adv.grads,
        ))
    }

    /// Runs `steps` discriminator updates through `update`, filtering the batch
    /// once since filters do not change in between. Returns the values seen
    /// before the first update.
    pub(crate) fn discriminator_steps<F>(&self, model: &mut FairModel, steps: usize, mut update: F) -> Result<Option<ObjectiveValues>, FairError>
    where
        F: FnMut(&mut FairModel, &AdversaryGrads) -> Result<(), FairError>,
    {
        let state = self.filter_forward(model, &self.plan.base, true)?;
        let mut first = None;
        for _ in 0..steps {
            let (values, grads) = self.discriminator_phase_with(model, &state)?;
            if !values.is_finite() {
                return Err(FairError::DivergenceDetected(0));
            }
            first.get_or_insert(values);
            update(model, &grads)?;
        }
        Ok(first)
    }
}

fn add_scaled(dst: &mut Matrix, alpha: f64, src: &Matrix) {
    crate::nn::axpy(dst.as_mut_slice(), alpha, src.as_slice());
}
