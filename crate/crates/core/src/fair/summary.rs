//! Ego-centric summaries in the filtered space and the value terms built on
//! them. These are whole-graph reference implementations; training uses the
//! per-batch equivalent in `plan`.

use rand::Rng;

use super::{node_value, shape_error, DiscriminatorBank, FairError, SummaryConfig, SummaryVariant};
use crate::base::EmbeddingMatrix;
use crate::data::{BipartiteAdjacency, Rating};
use crate::nn::{axpy, dot, Activation, Matrix, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct UserSummary {
    pub vector: Vec<f64>,
    /// False for users without training ratings; their vector is zero and they
    /// are left out of `V_S`.
    pub has_neighbors: bool,
}

/// `p_u = Σ_v r_uv f_v / Σ_v r_uv` over the user's rated items.
pub fn summarize_first_order(
    graph: &BipartiteAdjacency,
    filtered: &EmbeddingMatrix,
    user: usize,
) -> Result<UserSummary, FairError> {
    if user >= graph.user_count() || filtered.matrix().rows() != graph.node_count() {
        return Err(shape_error(
            format!("user below {} and {} rows", graph.user_count(), graph.node_count()),
            format!("user {user} and {} rows", filtered.matrix().rows()),
        ));
    }
    let mut vector = vec![0.0; filtered.dim()];
    let (targets, weights) = graph.neighbors(user);
    let total: f64 = weights.iter().sum();
    if targets.is_empty() || total == 0.0 {
        return Ok(UserSummary {
            vector,
            has_neighbors: false,
        });
    }
    for (&j, &w) in targets.iter().zip(weights) {
        axpy(&mut vector, w / total, filtered.matrix().row(j));
    }
    Ok(UserSummary {
        vector,
        has_neighbors: true,
    })
}

/// One rating-weighted averaging step over every node; isolated nodes get 0.
pub(crate) fn average_neighbors(graph: &BipartiteAdjacency, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..graph.node_count() {
        let (targets, weights) = graph.neighbors(i);
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            continue;
        }
        let row = out.row_mut(i);
        for (&j, &w) in targets.iter().zip(weights) {
            axpy(row, w / total, x.row(j));
        }
    }
    out
}

/// `h¹..h^L` for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub layers: Vec<Matrix>,
}

impl Propagation {
    pub fn order(&self) -> usize {
        self.layers.len()
    }

    /// `h^l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.layers[l - 1]
    }

    /// `(1/L) Σ_l h^l`.
    pub fn mean_aggregate(&self) -> Matrix {
        let mut out = Matrix::zeros(self.layers[0].rows(), self.layers[0].cols());
        for h in &self.layers {
            out.add_assign(h).expect("equal shapes");
        }
        out.scale(1.0 / self.layers.len() as f64);
        out
    }

    /// Per-order vectors of one node, `h¹` first.
    pub fn node_layers(&self, node: usize) -> Vec<&[f64]> {
        self.layers.iter().map(|h| h.row(node)).collect()
    }
}

/// `h¹_i = Σ_j a_ij f_j / Σ_j a_ij` and `h^l_i = Σ_j a_ij h^{l−1}_j / Σ_j a_ij`.
pub fn propagate_orders(graph: &BipartiteAdjacency, filtered: &Matrix, order: usize) -> Result<Propagation, FairError> {
    if order == 0 {
        return Err(FairError::InvalidConfig("propagation order must be at least 1".into()));
    }
    if filtered.rows() != graph.node_count() {
        return Err(shape_error(format!("{} rows", graph.node_count()), filtered.rows()));
    }
    let mut layers: Vec<Matrix> = Vec::with_capacity(order);
    for _ in 0..order {
        let next = average_neighbors(graph, layers.last().unwrap_or(filtered));
        layers.push(next);
    }
    Ok(Propagation { layers })
}

/// `V_R = −Σ (r_uv − f_uᵀ f_v)²`.
pub fn rating_value(batch: &[Rating], filtered: &EmbeddingMatrix) -> f64 {
    -batch
        .iter()
        .map(|r| {
            let d = r.value - dot(filtered.user(r.user), filtered.item(r.item));
            d * d
        })
        .sum::<f64>()
}

/// `V_S` for one user. `summaries` holds `[p_u]` for the first-order and
/// learned variants and `[h¹_u, .., h^L_u]` for value aggregation.
pub fn graph_value(
    discriminators: &DiscriminatorBank,
    summaries: &[Vec<f64>],
    labels: &[Option<usize>],
    config: &SummaryConfig,
) -> Result<f64, FairError> {
    match config.variant {
        SummaryVariant::FirstOrder | SummaryVariant::Learned => {
            let [p] = summaries else {
                return Err(shape_error("one summary vector", summaries.len()));
            };
            node_value(discriminators, p, labels)
        }
        SummaryVariant::ValueAggregation => {
            if summaries.len() != config.layer_weights.len() {
                return Err(shape_error(config.layer_weights.len(), summaries.len()));
            }
            let mut total = 0.0;
            for (h, &w) in summaries.iter().zip(&config.layer_weights) {
                let v = node_value(discriminators, h, labels)?;
                if w != 0.0 {
                    total += w * v;
                }
            }
            Ok(total)
        }
    }
}

/// The aggregation network `R^{L·D} → R^D`: LeakyReLU hidden layers and a
/// linear output.
pub fn new_aggregator<R: Rng + ?Sized>(config: &SummaryConfig, dim: usize, leak: f64, rng: &mut R) -> Result<Mlp, FairError> {
    Ok(Mlp::new(&config.aggregator_sizes(dim), Activation::Linear, leak, rng)?)
}

/// `p_u = MLP(h¹_u ‖ … ‖ h^L_u)`.
pub fn learned_aggregation(mlp: &Mlp, layers: &[&[f64]]) -> Result<Vec<f64>, FairError> {
    let input: Vec<f64> = layers.concat();
    if input.len() != mlp.input_dim() {
        return Err(shape_error(mlp.input_dim(), input.len()));
    }
    Ok(mlp.forward_vec(&input)?.0)
}
