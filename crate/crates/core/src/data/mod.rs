//! Rating stores, sensitive-attribute tables, dataset parsers, splits and the
//! bipartite rating graph.

mod graph;
mod lastfm;
mod movielens;
mod split;
mod store_io;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{ego_neighbors, BipartiteAdjacency};
pub use lastfm::{age_class, log_normalize_plays, parse_lastfm};
pub use movielens::{parse_movielens, MOVIELENS_AGE_CODES};
pub use split::{carve_validation, split_ratings, SplitRatios};
pub use store_io::{read_dataset, write_dataset, DatasetMeta, STORE_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: unknown age code {code}")]
    UnknownAgeCode { path: PathBuf, line: usize, code: String },
    #[error("{path}:{line}: play count must be positive")]
    NonPositivePlayCount { path: PathBuf, line: usize },
    #[error("no data: {0}")]
    MissingData(String),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    RatioSumInvalid(Vec<f64>),
    #[error("node {node} out of range for a graph with {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("invalid store: {0}")]
    InvalidStore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
    pub split: Split,
}

/// Sparse (user, item, rating) triples over dense 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingStore {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    ratings: Vec<Rating>,
}

impl RatingStore {
    /// Validates index ranges, the `[1, 5]` rating range and uniqueness of
    /// (user, item) within each split.
    pub fn new(user_ids: Vec<String>, item_ids: Vec<String>, ratings: Vec<Rating>) -> Result<Self, DataError> {
        let store = Self {
            user_ids,
            item_ids,
            ratings,
        };
        store.validate()?;
        Ok(store)
    }

    /// Store with anonymous ids `0..users`, `0..items`.
    pub fn with_counts(users: usize, items: usize, ratings: Vec<Rating>) -> Result<Self, DataError> {
        Self::new(
            (0..users).map(|u| u.to_string()).collect(),
            (0..items).map(|v| v.to_string()).collect(),
            ratings,
        )
    }

    fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::with_capacity(self.ratings.len());
        for (i, r) in self.ratings.iter().enumerate() {
            if r.user >= self.user_count() || r.item >= self.item_count() {
                return Err(DataError::InvalidStore(format!(
                    "rating {i} indexes ({}, {}) outside {}x{}",
                    r.user,
                    r.item,
                    self.user_count(),
                    self.item_count()
                )));
            }
            if !(1.0..=5.0).contains(&r.value) {
                return Err(DataError::InvalidStore(format!("rating {i} value {} outside [1, 5]", r.value)));
            }
            if !seen.insert((r.user, r.item, r.split)) {
                return Err(DataError::InvalidStore(format!(
                    "duplicate pair ({}, {}) in {:?}",
                    r.user, r.item, r.split
                )));
            }
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Rating> + '_ {
        self.ratings.iter().filter(move |r| r.split == split)
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    pub(crate) fn with_splits(&self, splits: Vec<Split>) -> Result<Self, DataError> {
        debug_assert_eq!(splits.len(), self.ratings.len());
        let ratings = self
            .ratings
            .iter()
            .zip(splits)
            .map(|(r, split)| Rating { split, ..*r })
            .collect();
        Self::new(self.user_ids.clone(), self.item_ids.clone(), ratings)
    }
}

/// Per-user class indices for each sensitive attribute; `None` marks a
/// missing label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    names: Vec<String>,
    cardinalities: Vec<usize>,
    values: Vec<Vec<Option<usize>>>,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, cardinalities: Vec<usize>, values: Vec<Vec<Option<usize>>>) -> Result<Self, DataError> {
        if names.len() != cardinalities.len() {
            return Err(DataError::InvalidStore("attribute names and cardinalities differ in length".into()));
        }
        if let Some(c) = cardinalities.iter().find(|&&c| c < 2) {
            return Err(DataError::InvalidStore(format!("attribute cardinality {c} < 2")));
        }
        for (u, row) in values.iter().enumerate() {
            if row.len() != names.len() {
                return Err(DataError::InvalidStore(format!("user {u} has {} attribute slots", row.len())));
            }
            for (k, v) in row.iter().enumerate() {
                if let Some(c) = v {
                    if *c >= cardinalities[k] {
                        return Err(DataError::InvalidStore(format!(
                            "user {u} attribute {} class {c} >= cardinality {}",
                            names[k], cardinalities[k]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            names,
            cardinalities,
            values,
        })
    }

    pub fn attribute_count(&self) -> usize {
        self.names.len()
    }

    pub fn user_count(&self) -> usize {
        self.values.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, attribute: usize) -> usize {
        self.cardinalities[attribute]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, user: usize, attribute: usize) -> Option<usize> {
        self.values.get(user).and_then(|row| row[attribute])
    }

    pub fn row(&self, user: usize) -> &[Option<usize>] {
        &self.values[user]
    }

    /// True when every attribute is labeled for `user`.
    pub fn is_fully_labeled(&self, user: usize) -> bool {
        self.values.get(user).is_some_and(|row| row.iter().all(Option::is_some))
    }

    /// Users with a label for `attribute`, paired with the label.
    pub fn labeled(&self, attribute: usize) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(u, row)| row[attribute].map(|c| (u, c)))
            .collect()
    }

    /// Restricts the table to the named attributes, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| DataError::InvalidStore(format!("unknown attribute {n}")))
            })
            .collect::<Result<_, _>>()?;
        Self::new(
            idx.iter().map(|&k| self.names[k].clone()).collect(),
            idx.iter().map(|&k| self.cardinalities[k]).collect(),
            self.values
                .iter()
                .map(|row| idx.iter().map(|&k| row[k]).collect())
                .collect(),
        )
    }
}
