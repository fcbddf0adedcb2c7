use serde::{Deserialize, Serialize};

use super::BaseError;
use crate::nn::{dot, Matrix};

/// One `D`-vector per node: users `0..M`, then items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    user_count: usize,
    item_count: usize,
    vectors: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(user_count: usize, item_count: usize, vectors: Matrix) -> Result<Self, BaseError> {
        if vectors.rows() != user_count + item_count {
            return Err(BaseError::InvalidConfig(format!(
                "{} rows for {} users and {} items",
                vectors.rows(),
                user_count,
                item_count
            )));
        }
        if !vectors.is_finite() {
            return Err(BaseError::Nn(crate::nn::NnError::NonFinite("embedding matrix".into())));
        }
        Ok(Self {
            user_count,
            item_count,
            vectors,
        })
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn into_matrix(self) -> Matrix {
        self.vectors
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.vectors.row(u)
    }

    pub fn item(&self, v: usize) -> &[f64] {
        self.vectors.row(self.user_count + v)
    }

    /// User rows as their own matrix.
    pub fn users(&self) -> Matrix {
        self.vectors.gather_rows(&(0..self.user_count).collect::<Vec<_>>())
    }

    /// Unchecked `e_uᵀ e_v`.
    pub(crate) fn score(&self, u: usize, v: usize) -> f64 {
        dot(self.user(u), self.item(v))
    }
}

/// `e_uᵀ e_v`.
pub fn predict_rating(embeddings: &EmbeddingMatrix, user: usize, item: usize) -> Result<f64, BaseError> {
    if user >= embeddings.user_count {
        return Err(BaseError::IndexOutOfRange {
            index: user,
            count: embeddings.user_count,
        });
    }
    if item >= embeddings.item_count {
        return Err(BaseError::IndexOutOfRange {
            index: item,
            count: embeddings.item_count,
        });
    }
    Ok(embeddings.score(user, item))
}
