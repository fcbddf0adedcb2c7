use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shape_error, FairError};
use crate::base::EmbeddingMatrix;
use crate::nn::{dot, Activation, Matrix, Mlp, MlpCache, MlpGrads, Params, ParamsMut};

/// `K` sub-filters composed by their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    filters: Vec<Mlp>,
}

impl FilterBank {
    /// `count` filters over `[dim, hidden.., dim]` with a linear output layer.
    pub fn new<R: Rng + ?Sized>(count: usize, dim: usize, hidden: &[usize], leak: f64, rng: &mut R) -> Result<Self, FairError> {
        let mut sizes = vec![dim];
        sizes.extend(hidden);
        sizes.push(dim);
        let filters = (0..count)
            .map(|_| Mlp::new(&sizes, Activation::Linear, leak, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_filters(filters)
    }

    pub fn from_filters(filters: Vec<Mlp>) -> Result<Self, FairError> {
        let Some(first) = filters.first() else {
            return Err(FairError::InvalidConfig("a filter bank needs at least one filter".into()));
        };
        let dim = first.input_dim();
        for f in &filters {
            if f.input_dim() != dim || f.output_dim() != dim {
                return Err(shape_error(
                    format!("{dim} -> {dim}"),
                    format!("{} -> {}", f.input_dim(), f.output_dim()),
                ));
            }
        }
        Ok(Self { filters })
    }

    pub fn identity(count: usize, dim: usize) -> Self {
        Self {
            filters: vec![Mlp::identity(dim); count],
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.filters[0].input_dim()
    }

    pub fn filters(&self) -> &[Mlp] {
        &self.filters
    }

    /// Filters every row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Vec<MlpCache>), FairError> {
        let mut out = Matrix::zeros(x.rows(), self.dim());
        let mut caches = Vec::with_capacity(self.filters.len());
        for f in &self.filters {
            let (y, cache) = f.forward(x)?;
            out.add_assign(&y)?;
            caches.push(cache);
        }
        out.scale(1.0 / self.filters.len() as f64);
        Ok((out, caches))
    }

    pub fn backward(&self, caches: &[MlpCache], d_out: &Matrix) -> Result<Vec<MlpGrads>, FairError> {
        let mut share = d_out.clone();
        share.scale(1.0 / self.filters.len() as f64);
        self.filters
            .iter()
            .zip(caches)
            .map(|(f, c)| f.backward(c, &share).map(|(g, _)| g).map_err(FairError::from))
            .collect()
    }

    pub fn filter_embeddings(&self, embeddings: &EmbeddingMatrix) -> Result<EmbeddingMatrix, FairError> {
        let (f, _) = self.forward(embeddings.matrix())?;
        EmbeddingMatrix::new(embeddings.user_count(), embeddings.item_count(), f)
            .map_err(|e| FairError::InvalidConfig(e.to_string()))
    }
}

impl Params for FilterBank {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.filters.param_slices()
    }
}

impl ParamsMut for FilterBank {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.filters.param_slices_mut()
    }
}

/// `f = (1/K) Σ_k ℱᵏ(e)`.
pub fn apply_filters(bank: &FilterBank, e: &[f64]) -> Result<Vec<f64>, FairError> {
    if e.len() != bank.dim() {
        return Err(shape_error(bank.dim(), e.len()));
    }
    let x = Matrix::from_vec(1, e.len(), e.to_vec())?;
    Ok(bank.forward(&x)?.0.into_vec())
}

/// `f_uᵀ f_v`.
pub fn predict_filtered(f_u: &[f64], f_v: &[f64]) -> Result<f64, FairError> {
    if f_u.len() != f_v.len() {
        return Err(shape_error(f_u.len(), f_v.len()));
    }
    Ok(dot(f_u, f_v))
}
