//! Rating-weighted graph convolution over free layer-0 embeddings.
//!
//! `h⁰ = E`, `h^{l+1} = (P h^l) W_l` where `P` is the adjacency with each row
//! divided by its weight sum. A node without training edges aggregates to its
//! own `h⁰`. The output embedding is the mean of `h⁰..h^L`, so with zero
//! layers the model is PMF.

use std::sync::Arc;

use super::{squared_loss, train_loop, BaseError, BaseTrainConfig, EmbeddingMatrix, RatingModel, TrainedBase};
use crate::data::{BipartiteAdjacency, Rating, RatingStore};
use crate::nn::{axpy, seeded_init, InitScheme, Matrix, Params, ParamsMut};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    graph: Arc<BipartiteAdjacency>,
    free: Matrix,
    layers: Vec<Matrix>,
}

struct Forward {
    hidden: Vec<Matrix>,
    aggregated: Vec<Matrix>,
    output: Matrix,
}

/// Row-normalized `P h`; isolated rows copy `fallback`.
fn aggregate(graph: &BipartiteAdjacency, h: &Matrix, fallback: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(h.rows(), h.cols());
    for i in 0..graph.node_count() {
        let (targets, weights) = graph.neighbors(i);
        let total: f64 = weights.iter().sum();
        let row = out.row_mut(i);
        if targets.is_empty() || total == 0.0 {
            row.copy_from_slice(fallback.row(i));
            continue;
        }
        for (&j, &w) in targets.iter().zip(weights) {
            axpy(row, w / total, h.row(j));
        }
    }
    out
}

/// Adjoint of [`aggregate`] with respect to `h`; isolated rows are routed to
/// `fallback_grad` instead.
fn aggregate_backward(graph: &BipartiteAdjacency, d_out: &Matrix, d_h: &mut Matrix, fallback_grad: &mut Matrix) {
    for i in 0..graph.node_count() {
        let (targets, weights) = graph.neighbors(i);
        let total: f64 = weights.iter().sum();
        if targets.is_empty() || total == 0.0 {
            axpy(fallback_grad.row_mut(i), 1.0, d_out.row(i));
            continue;
        }
        for (&j, &w) in targets.iter().zip(weights) {
            axpy(d_h.row_mut(j), w / total, d_out.row(i));
        }
    }
}

impl GcnModel {
    pub fn new(graph: Arc<BipartiteAdjacency>, config: &BaseTrainConfig) -> Self {
        let free = seeded_init(
            graph.node_count(),
            config.dim,
            InitScheme::Uniform(config.init_scale),
            config.seed,
        );
        let layers = (0..config.gcn_layers).map(|_| Matrix::identity(config.dim)).collect();
        Self { graph, free, layers }
    }

    pub fn with_parameters(graph: Arc<BipartiteAdjacency>, free: Matrix, layers: Vec<Matrix>) -> Result<Self, BaseError> {
        let dim = free.cols();
        if free.rows() != graph.node_count() || layers.iter().any(|w| w.shape() != (dim, dim)) {
            return Err(BaseError::InvalidConfig("GCN parameter shapes do not match the graph".into()));
        }
        Ok(Self { graph, free, layers })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn forward(&self) -> Forward {
        let mut hidden = vec![self.free.clone()];
        let mut aggregated = Vec::with_capacity(self.layers.len());
        for w in &self.layers {
            let agg = aggregate(&self.graph, hidden.last().expect("non-empty"), &self.free);
            hidden.push(agg.matmul(w).expect("square layer"));
            aggregated.push(agg);
        }
        let mut output = Matrix::zeros(self.free.rows(), self.free.cols());
        for h in &hidden {
            output.add_assign(h).expect("same shape");
        }
        output.scale(1.0 / hidden.len() as f64);
        Forward {
            hidden,
            aggregated,
            output,
        }
    }

    /// Per-layer representations `h⁰..h^L` of every node.
    pub fn layer_outputs(&self) -> Vec<Matrix> {
        self.forward().hidden
    }

    pub fn embeddings(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(self.graph.user_count(), self.graph.item_count(), self.forward().output)
            .expect("shape fixed at construction")
    }

    /// Batch objective and gradients `[dE, dW_1, .., dW_L]`. The L2 term
    /// penalizes the layer-0 rows of the batch nodes.
    pub fn loss_and_grad(&self, batch: &[Rating], l2: f64) -> (f64, Vec<Matrix>) {
        let fwd = self.forward();
        let (loss, d_out, d_l2) = squared_loss(&fwd.output, &self.free, self.graph.user_count(), batch, l2);
        let depth = self.layers.len();
        let share = 1.0 / (depth + 1) as f64;

        let mut d_hidden: Vec<Matrix> = (0..=depth)
            .map(|_| {
                let mut d = d_out.clone();
                d.scale(share);
                d
            })
            .collect();
        let mut d_free = d_l2;
        let mut d_layers = vec![Matrix::zeros(0, 0); depth];
        for l in (0..depth).rev() {
            let d_next = &d_hidden[l + 1];
            d_layers[l] = fwd.aggregated[l].t_matmul(d_next).expect("shapes");
            let d_agg = d_next.matmul_t(&self.layers[l]).expect("shapes");
            let (lower, _) = d_hidden.split_at_mut(l + 1);
            aggregate_backward(&self.graph, &d_agg, &mut lower[l], &mut d_free);
        }
        d_free.add_assign(&d_hidden[0]).expect("same shape");
        let mut grads = vec![d_free];
        grads.extend(d_layers);
        (loss, grads)
    }
}

impl Params for GcnModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.free.as_slice()];
        out.extend(self.layers.iter().map(Matrix::as_slice));
        out
    }
}

impl ParamsMut for GcnModel {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.free.as_mut_slice()];
        out.extend(self.layers.iter_mut().map(Matrix::as_mut_slice));
        out
    }
}

impl RatingModel for GcnModel {
    fn loss_and_grad(&self, batch: &[Rating], l2: f64) -> (f64, Vec<Matrix>) {
        GcnModel::loss_and_grad(self, batch, l2)
    }

    fn embeddings(&self) -> EmbeddingMatrix {
        GcnModel::embeddings(self)
    }
}

pub fn train_gcn(store: &RatingStore, config: &BaseTrainConfig) -> Result<TrainedBase, BaseError> {
    let graph = Arc::new(BipartiteAdjacency::build(store));
    train_loop(GcnModel::new(graph, config), store, config)
}
