//! Measurement: rating accuracy, attribute leakage and group fairness.

mod attacker;
mod group;
mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::base::EmbeddingMatrix;
use crate::data::Rating;
use crate::nn::dot;

pub use attacker::{leakage_audit, user_features, AttackConfig, FeatureSource, LeakageMetric, LeakageResult};
pub use group::{equal_opportunity, statistical_parity, GroupMetric, ItemGroupStats, ScoredPair};
pub use metrics::{auc, micro_f1, rmse};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("attribute {attribute}: class {class} has {count} labeled users, too few for both attacker splits")]
    InsufficientLabels { attribute: String, class: usize, count: usize },
    #[error("no item has raters from the required groups")]
    NoScoredItems,
    #[error("feature construction failed: {0}")]
    Features(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `(user, item, e_uᵀe_v, r)` for each rating.
pub fn score_pairs<'a>(embeddings: &EmbeddingMatrix, ratings: impl IntoIterator<Item = &'a Rating>) -> Vec<ScoredPair> {
    ratings
        .into_iter()
        .map(|r| ScoredPair {
            user: r.user,
            item: r.item,
            prediction: dot(embeddings.user(r.user), embeddings.item(r.item)),
            truth: r.value,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessEntry {
    pub attribute: String,
    pub statistical_parity: f64,
    pub equal_opportunity: f64,
    pub scored_items: usize,
    pub skipped_items: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub leakage: Vec<LeakageResult>,
    pub fairness: Vec<FairnessEntry>,
    pub metadata: ReportMetadata,
}

impl MetricsReport {
    /// Checks value ranges: AUC and F1 in `[0, 1]`, disparities non-negative.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rmse.is_finite() && self.rmse >= 0.0) {
            return Err(format!("rmse {}", self.rmse));
        }
        if let Some(l) = self.leakage.iter().find(|l| !(0.0..=1.0).contains(&l.value)) {
            return Err(format!("{} {:?} {}", l.attribute, l.metric, l.value));
        }
        if let Some(f) = self.fairness.iter().find(|f| !(f.statistical_parity >= 0.0 && f.equal_opportunity >= 0.0)) {
            return Err(format!("{} disparities {} {}", f.attribute, f.statistical_parity, f.equal_opportunity));
        }
        Ok(())
    }

    /// Flat view: `rmse`, `<attr>_auc` or `<attr>_f1`,
    /// `<attr>_statistical_parity`, `<attr>_equal_opportunity`.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("rmse".to_string(), self.rmse);
        for l in &self.leakage {
            out.insert(format!("{}_{}", l.attribute, l.metric.suffix()), l.value);
        }
        for f in &self.fairness {
            out.insert(format!("{}_statistical_parity", f.attribute), f.statistical_parity);
            out.insert(format!("{}_equal_opportunity", f.attribute), f.equal_opportunity);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two-column text table of [`MetricsReport::flat`].
    pub fn table(&self) -> String {
        let flat = self.flat();
        let width = flat.keys().map(String::len).max().unwrap_or(0);
        flat.iter().map(|(k, v)| format!("{k:<width$}  {v:.4}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> MetricsReport {
        MetricsReport {
            rmse: 0.9,
            leakage: vec![
                LeakageResult {
                    attribute: "gender".into(),
                    metric: LeakageMetric::Auc,
                    value: 0.55,
                    per_repetition: vec![0.55],
                },
                LeakageResult {
                    attribute: "age".into(),
                    metric: LeakageMetric::MicroF1,
                    value: 0.3,
                    per_repetition: vec![0.3],
                },
            ],
            fairness: vec![FairnessEntry {
                attribute: "gender".into(),
                statistical_parity: 0.1,
                equal_opportunity: 0.05,
                scored_items: 10,
                skipped_items: 2,
            }],
            metadata: ReportMetadata::default(),
        }
    }

    #[test]
    fn flat_keys() {
        let keys: Vec<String> = report().flat().into_keys().collect();
        assert_eq!(
            keys,
            vec!["age_f1", "gender_auc", "gender_equal_opportunity", "gender_statistical_parity", "rmse"]
        );
        assert!(report().table().contains("gender_auc"));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let r = report();
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.validate().is_ok());
        let mut bad = r;
        bad.leakage[0].value = 1.2;
        assert!(bad.validate().is_err());
    }
}
