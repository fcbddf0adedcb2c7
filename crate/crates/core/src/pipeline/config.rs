//! Flat key-value run configuration.
//!
//! Every key is optional; defaults are the MovieLens-1M settings. Keys fall
//! into four groups and each pipeline stage hashes its own group chained onto
//! the hash of the stage before it, so editing an evaluation key leaves the
//! trained models valid while editing a dataset key invalidates everything.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{PipelineError, PlantedAttribute, Stage, SyntheticConfig};
use crate::audit::AttackConfig;
use crate::base::{BaseModelKind, BaseTrainConfig};
use crate::data::SplitRatios;
use crate::fair::{FairTrainConfig, SummaryConfig, SummaryVariant};
use crate::nn::{derive_seed, DEFAULT_LEAK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Generated from the `synthetic_*` keys.
    Synthetic,
    /// `ratings.dat` and `users.dat` from MovieLens-1M.
    Movielens,
    /// The Lastfm-360K play-count and profile TSVs.
    Lastfm,
    /// A dataset directory in the on-disk store format, e.g. from `fairgo generate`.
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditTarget {
    Base,
    Fair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Ratings file, or the store directory for `dataset = "store"`.
    pub ratings_path: Option<PathBuf>,
    /// MovieLens `users.dat` or the Lastfm profile file.
    pub profiles_path: Option<PathBuf>,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Share of the training ratings re-tagged as validation after splitting.
    pub carve_validation: f64,
    pub synthetic_users: usize,
    pub synthetic_items: usize,
    pub synthetic_density: f64,
    pub synthetic_strength: f64,
    /// `name:cardinality` entries.
    pub synthetic_attributes: Vec<String>,
    pub synthetic_free_dim: usize,
    pub synthetic_user_scale: f64,
    pub synthetic_attribute_scale: f64,
    pub synthetic_item_scale: f64,
    pub synthetic_noise: f64,

    pub base_model: BaseModelKind,
    pub embedding_dim: usize,
    pub base_epochs: usize,
    pub base_batch_size: usize,
    pub base_learning_rate: f64,
    pub base_l2: f64,
    pub base_init_scale: f64,
    pub gcn_layers: usize,
    pub select_best_validation: bool,

    /// Sensitive attributes to protect and audit; empty means all.
    pub attributes: Vec<String>,
    pub lambda: f64,
    pub fair_epochs: usize,
    pub fair_batch_size: usize,
    pub filter_learning_rate: f64,
    pub discriminator_learning_rate: f64,
    pub discriminator_steps: usize,
    pub filter_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_relu_slope: f64,
    pub neighbor_cap: usize,
    pub disable_discriminators: bool,
    pub summary: SummaryVariant,
    /// Propagation depth for the learned summary.
    pub summary_order: usize,
    /// Per-order weights for value aggregation; their count sets the depth.
    pub layer_weights: Vec<f64>,
    /// Hidden widths of the learned aggregation network; empty means `[D, D]`.
    pub aggregator_hidden: Vec<usize>,

    pub audit_model: AuditTarget,
    pub attacker_repetitions: usize,
    pub audit_leakage: bool,
    pub audit_fairness: bool,

    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synthetic = SyntheticConfig::default();
        let base = BaseTrainConfig::default();
        let fair = FairTrainConfig::default();
        Self {
            dataset: DatasetKind::Movielens,
            ratings_path: None,
            profiles_path: None,
            train_fraction: 0.9,
            validation_fraction: 0.0,
            carve_validation: 0.05,
            synthetic_users: synthetic.users,
            synthetic_items: synthetic.items,
            synthetic_density: synthetic.density,
            synthetic_strength: synthetic.strength,
            synthetic_attributes: synthetic
                .attributes
                .iter()
                .map(|a| format!("{}:{}", a.name, a.cardinality))
                .collect(),
            synthetic_free_dim: synthetic.free_dim,
            synthetic_user_scale: synthetic.user_scale,
            synthetic_attribute_scale: synthetic.attribute_scale,
            synthetic_item_scale: synthetic.item_scale,
            synthetic_noise: synthetic.noise,
            base_model: BaseModelKind::Pmf,
            embedding_dim: base.dim,
            base_epochs: base.epochs,
            base_batch_size: base.batch_size,
            base_learning_rate: base.learning_rate,
            base_l2: base.l2,
            base_init_scale: base.init_scale,
            gcn_layers: base.gcn_layers,
            select_best_validation: base.select_best_validation,
            attributes: Vec::new(),
            lambda: fair.lambda,
            fair_epochs: fair.epochs,
            fair_batch_size: fair.batch_size,
            filter_learning_rate: fair.filter_learning_rate,
            discriminator_learning_rate: fair.discriminator_learning_rate,
            discriminator_steps: fair.discriminator_steps,
            filter_hidden: fair.filter_hidden,
            discriminator_hidden: fair.discriminator_hidden,
            leaky_relu_slope: DEFAULT_LEAK,
            neighbor_cap: fair.neighbor_cap,
            disable_discriminators: fair.disable_discriminators,
            summary: SummaryVariant::FirstOrder,
            summary_order: 2,
            layer_weights: vec![4.0, 1.0],
            aggregator_hidden: Vec::new(),
            audit_model: AuditTarget::Fair,
            attacker_repetitions: AttackConfig::default().repetitions,
            audit_leakage: true,
            audit_fairness: true,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

const INGEST_KEYS: &[&str] = &[
    "dataset",
    "ratings_path",
    "profiles_path",
    "train_fraction",
    "validation_fraction",
    "carve_validation",
    "synthetic_users",
    "synthetic_items",
    "synthetic_density",
    "synthetic_strength",
    "synthetic_attributes",
    "synthetic_free_dim",
    "synthetic_user_scale",
    "synthetic_attribute_scale",
    "synthetic_item_scale",
    "synthetic_noise",
    "seed",
];
const BASE_KEYS: &[&str] = &[
    "base_model",
    "embedding_dim",
    "base_epochs",
    "base_batch_size",
    "base_learning_rate",
    "base_l2",
    "base_init_scale",
    "gcn_layers",
    "select_best_validation",
];
const FAIR_KEYS: &[&str] = &[
    "attributes",
    "lambda",
    "fair_epochs",
    "fair_batch_size",
    "filter_learning_rate",
    "discriminator_learning_rate",
    "discriminator_steps",
    "filter_hidden",
    "discriminator_hidden",
    "leaky_relu_slope",
    "neighbor_cap",
    "disable_discriminators",
    "summary",
    "summary_order",
    "layer_weights",
    "aggregator_hidden",
];
const AUDIT_KEYS: &[&str] = &["audit_model", "attacker_repetitions", "audit_leakage", "audit_fairness"];

const SPLIT_STREAM: u64 = 11;
const CARVE_STREAM: u64 = 12;
const SYNTHETIC_STREAM: u64 = 13;
const BASE_STREAM: u64 = 14;
const FAIR_STREAM: u64 = 15;
const ATTACK_STREAM: u64 = 16;

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        let test = 1.0 - self.train_fraction - self.validation_fraction;
        if !(self.train_fraction > 0.0 && self.validation_fraction >= 0.0 && test > -1e-9) {
            return bad(format!(
                "train_fraction {} and validation_fraction {} must leave a non-negative test share",
                self.train_fraction, self.validation_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.carve_validation) {
            return bad(format!("carve_validation {} outside [0, 1)", self.carve_validation));
        }
        match self.dataset {
            DatasetKind::Synthetic => {
                self.synthetic()?.validate()?;
            }
            DatasetKind::Movielens | DatasetKind::Lastfm if self.profiles_path.is_none() || self.ratings_path.is_none() => {
                return bad(format!("dataset {:?} needs ratings_path and profiles_path", self.dataset));
            }
            DatasetKind::Store if self.ratings_path.is_none() => {
                return bad("dataset \"store\" needs ratings_path pointing at the store directory".into());
            }
            _ => {}
        }
        self.base_train_config()
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.fair_train_config()
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.summary_config()
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        if self.attacker_repetitions == 0 {
            return bad("attacker_repetitions must be positive".into());
        }
        Ok(())
    }

    pub fn split_ratios(&self) -> SplitRatios {
        let test = (1.0 - self.train_fraction - self.validation_fraction).max(0.0);
        SplitRatios::new(self.train_fraction, self.validation_fraction, test)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SPLIT_STREAM)
    }

    pub fn carve_seed(&self) -> u64 {
        derive_seed(self.seed, CARVE_STREAM)
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig, PipelineError> {
        let attributes = self
            .synthetic_attributes
            .iter()
            .map(|entry| {
                let parsed = entry
                    .split_once(':')
                    .and_then(|(name, c)| Some((name.trim(), c.trim().parse().ok()?)));
                match parsed {
                    Some((name, cardinality)) => Ok(PlantedAttribute {
                        name: name.to_string(),
                        cardinality,
                    }),
                    None => Err(PipelineError::ConfigInvalid(format!(
                        "synthetic attribute {entry:?} is not name:cardinality"
                    ))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SyntheticConfig {
            users: self.synthetic_users,
            items: self.synthetic_items,
            density: self.synthetic_density,
            attributes,
            strength: self.synthetic_strength,
            free_dim: self.synthetic_free_dim,
            user_scale: self.synthetic_user_scale,
            attribute_scale: self.synthetic_attribute_scale,
            item_scale: self.synthetic_item_scale,
            noise: self.synthetic_noise,
            seed: derive_seed(self.seed, SYNTHETIC_STREAM),
        })
    }

    pub fn base_train_config(&self) -> BaseTrainConfig {
        BaseTrainConfig {
            epochs: self.base_epochs,
            batch_size: self.base_batch_size,
            learning_rate: self.base_learning_rate,
            l2: self.base_l2,
            dim: self.embedding_dim,
            gcn_layers: self.gcn_layers,
            init_scale: self.base_init_scale,
            select_best_validation: self.select_best_validation,
            seed: derive_seed(self.seed, BASE_STREAM),
        }
    }

    pub fn fair_train_config(&self) -> FairTrainConfig {
        FairTrainConfig {
            lambda: self.lambda,
            epochs: self.fair_epochs,
            batch_size: self.fair_batch_size,
            filter_learning_rate: self.filter_learning_rate,
            discriminator_learning_rate: self.discriminator_learning_rate,
            discriminator_steps: self.discriminator_steps,
            filter_hidden: self.filter_hidden.clone(),
            discriminator_hidden: self.discriminator_hidden.clone(),
            leak: self.leaky_relu_slope,
            neighbor_cap: self.neighbor_cap,
            disable_discriminators: self.disable_discriminators,
            freeze_filters: false,
            seed: derive_seed(self.seed, FAIR_STREAM),
        }
    }

    pub fn summary_config(&self) -> SummaryConfig {
        let mut summary = match self.summary {
            SummaryVariant::FirstOrder => SummaryConfig::first_order(),
            SummaryVariant::ValueAggregation => SummaryConfig::value_aggregation(self.layer_weights.clone()),
            SummaryVariant::Learned => SummaryConfig::learned(self.summary_order),
        };
        summary.aggregator_hidden = self.aggregator_hidden.clone();
        summary
    }

    pub fn attack_config(&self, threads: usize) -> AttackConfig {
        AttackConfig {
            repetitions: self.attacker_repetitions,
            seed: derive_seed(self.seed, ATTACK_STREAM),
            threads,
            ..AttackConfig::default()
        }
    }

    /// Config hash a stage stamps on its artifacts.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let (keys, parent): (&[&str], Option<Stage>) = match stage {
            Stage::Ingest => (INGEST_KEYS, None),
            Stage::TrainBase => (BASE_KEYS, Some(Stage::Ingest)),
            Stage::TrainFair => (FAIR_KEYS, Some(Stage::TrainBase)),
            Stage::Audit => (
                AUDIT_KEYS,
                Some(match self.audit_model {
                    AuditTarget::Base => Stage::TrainBase,
                    AuditTarget::Fair => Stage::TrainFair,
                }),
            ),
            Stage::Report => (&[], Some(Stage::Audit)),
        };
        let all = match serde_json::to_value(self) {
            Ok(Value::Object(map)) => map,
            _ => unreachable!("config serializes to an object"),
        };
        let picked: Map<String, Value> = keys
            .iter()
            .map(|&k| (k.to_string(), all.get(k).cloned().unwrap_or(Value::Null)))
            .collect();
        let mut hasher = Sha256::new();
        hasher.update(stage.as_str());
        if let Some(p) = parent {
            hasher.update(self.stage_hash(p));
        }
        hasher.update(Value::Object(picked).to_string());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_belongs_to_one_stage() {
        let Value::Object(all) = serde_json::to_value(RunConfig::default()).unwrap() else {
            panic!()
        };
        for key in all.keys().filter(|k| *k != "out") {
            let owners = [INGEST_KEYS, BASE_KEYS, FAIR_KEYS, AUDIT_KEYS]
                .iter()
                .filter(|keys| keys.contains(&key.as_str()))
                .count();
            assert_eq!(owners, 1, "{key}");
        }
    }

    #[test]
    fn defaults_carry_the_published_settings() {
        let c = RunConfig::default();
        assert_eq!(c.embedding_dim, 64);
        assert_eq!(c.filter_hidden, vec![128, 64]);
        assert_eq!(c.discriminator_hidden, vec![16, 8]);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.filter_learning_rate, 0.005);
        assert_eq!(c.discriminator_learning_rate, 0.005);
        assert_eq!(c.base_learning_rate, 0.005);
        assert_eq!(c.train_fraction, 0.9);
        assert_eq!(c.layer_weights, vec![4.0, 1.0]);
    }

    #[test]
    fn hashes_chain_downstream_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            attacker_repetitions: 3,
            ..a.clone()
        };
        assert_eq!(a.stage_hash(Stage::TrainFair), b.stage_hash(Stage::TrainFair));
        assert_ne!(a.stage_hash(Stage::Audit), b.stage_hash(Stage::Audit));
        let c = RunConfig { seed: 1, ..a.clone() };
        for stage in Stage::ALL {
            assert_ne!(a.stage_hash(stage), c.stage_hash(stage));
        }
        let d = RunConfig {
            audit_model: AuditTarget::Base,
            lambda: 0.5,
            ..a.clone()
        };
        assert_eq!(
            a.stage_hash(Stage::TrainBase),
            RunConfig { lambda: 0.5, ..a.clone() }.stage_hash(Stage::TrainBase)
        );
        assert_ne!(d.stage_hash(Stage::Audit), a.stage_hash(Stage::Audit));
    }

    #[test]
    fn flat_toml_parses_with_defaults() {
        let c: RunConfig = toml::from_str("dataset = \"synthetic\"\nlambda = 0.2\nfilter_hidden = [128, 64, 32]\n").unwrap();
        assert_eq!(c.dataset, DatasetKind::Synthetic);
        assert_eq!(c.lambda, 0.2);
        assert_eq!(c.filter_hidden, vec![128, 64, 32]);
        assert_eq!(c.embedding_dim, 64);
        assert!(toml::from_str::<RunConfig>("lamda = 0.2").is_err());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let c = RunConfig {
            dataset: DatasetKind::Synthetic,
            synthetic_strength: 2.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            dataset: DatasetKind::Synthetic,
            synthetic_attributes: vec!["gender".into()],
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(PipelineError::ConfigInvalid(_))));
        assert!(RunConfig::default().validate().is_err(), "movielens without paths");
    }
}
