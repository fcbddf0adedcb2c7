use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{AuditTarget, DatasetKind, RunConfig};
use super::manifest::{Manifest, OutputLock};
use super::{generate_synthetic, thread_count, PipelineError, Stage};
use crate::audit::{
    equal_opportunity, leakage_audit, rmse, score_pairs, statistical_parity, FairnessEntry, GroupMetric,
    MetricsReport, ReportMetadata,
};
use crate::base::{train_gcn, train_pmf, BaseModelKind, EmbeddingMatrix};
use crate::data::{
    carve_validation, parse_lastfm, parse_movielens, read_dataset, split_ratings, write_dataset, AttributeTable,
    RatingStore, Split,
};
use crate::fair::{train_adversarial, FairModel};
use crate::nn::Checkpoint;

const DATASET_DIR: &str = "dataset";
const BASE_CHECKPOINT: &str = "base/embeddings.json";
const BASE_CURVE: &str = "base/curve.csv";
const FAIR_CHECKPOINT: &str = "fair/model.json";
const FAIR_CURVE: &str = "fair/curve.csv";
const METRICS: &str = "audit/metrics.json";
const REPORT_JSON: &str = "report.json";
const REPORT_TABLE: &str = "report.txt";
const FAIR_KIND: &str = "fairgo";

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub config_hash: String,
    /// Paths relative to the output directory.
    pub artifacts: Vec<PathBuf>,
}

/// The merged view written by the `report` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub report: MetricsReport,
}

/// Runs one stage under an exclusive lock on the output directory and
/// records its artifacts in the manifest.
pub fn run_stage(stage: Stage, config: &RunConfig) -> Result<StageOutcome, PipelineError> {
    config.validate()?;
    let out = config.out.as_path();
    let _lock = OutputLock::acquire(out)?;
    let mut manifest = Manifest::load(out)?;
    let hash = config.stage_hash(stage);
    info!("{}: config hash {}", stage.as_str(), &hash[..12]);
    let artifacts = match stage {
        Stage::Ingest => ingest(config, out)?,
        Stage::TrainBase => train_base_stage(config, out, &manifest)?,
        Stage::TrainFair => train_fair_stage(config, out, &manifest)?,
        Stage::Audit => audit_stage(config, out, &manifest)?,
        Stage::Report => report_stage(config, out, &manifest)?,
    };
    manifest.record(stage, &hash, config.seed, out, &artifacts)?;
    manifest.save(out)?;
    Ok(StageOutcome {
        stage,
        config_hash: hash,
        artifacts,
    })
}

/// Every stage the config needs, in order.
pub fn run_all(config: &RunConfig) -> Result<Vec<StageOutcome>, PipelineError> {
    Stage::ALL
        .into_iter()
        .filter(|&s| !(s == Stage::TrainFair && config.audit_model == AuditTarget::Base))
        .map(|s| run_stage(s, config))
        .collect()
}

fn required_path(path: &Option<PathBuf>) -> Result<&Path, PipelineError> {
    path.as_deref()
        .ok_or_else(|| PipelineError::ConfigInvalid("missing dataset path".into()))
}

fn ingest(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let (store, attributes) = match config.dataset {
        DatasetKind::Synthetic => generate_synthetic(&config.synthetic()?)?,
        DatasetKind::Movielens => parse_movielens(
            required_path(&config.ratings_path)?,
            required_path(&config.profiles_path)?,
        )?,
        DatasetKind::Lastfm => parse_lastfm(
            required_path(&config.ratings_path)?,
            required_path(&config.profiles_path)?,
        )?,
        DatasetKind::Store => read_dataset(required_path(&config.ratings_path)?)?,
    };
    let mut store = split_ratings(&store, config.split_ratios(), config.split_seed())?;
    if config.carve_validation > 0.0 {
        store = carve_validation(&store, config.carve_validation, config.carve_seed())?;
    }
    info!(
        "ingest: {} users, {} items, {} train / {} validation / {} test ratings",
        store.user_count(),
        store.item_count(),
        store.split_count(Split::Train),
        store.split_count(Split::Validation),
        store.split_count(Split::Test)
    );
    write_dataset(&out.join(DATASET_DIR), &store, &attributes)?;
    Ok(["dataset.json", "ratings.csv", "attributes.csv"]
        .iter()
        .map(|f| Path::new(DATASET_DIR).join(f))
        .collect())
}

fn load_dataset(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<(RatingStore, AttributeTable), PipelineError> {
    manifest.require(Stage::Ingest, &config.stage_hash(Stage::Ingest), out)?;
    let (store, attributes) = read_dataset(&out.join(DATASET_DIR))?;
    let attributes = if config.attributes.is_empty() {
        attributes
    } else {
        attributes
            .select(&config.attributes)
            .map_err(|e| PipelineError::ConfigInvalid(format!("attributes: {e}")))?
    };
    Ok((store, attributes))
}

fn load_checkpoint<T>(out: &Path, rel: &str, kind: &str, expected_hash: &str) -> Result<T, PipelineError>
where
    T: Serialize + serde::de::DeserializeOwned,
{
    let path = out.join(rel);
    let ckpt: Checkpoint<T> = Checkpoint::load(&path, kind)?;
    if ckpt.config_hash != expected_hash {
        return Err(PipelineError::HashMismatch {
            path,
            expected: expected_hash.to_string(),
            found: ckpt.config_hash,
        });
    }
    Ok(ckpt.payload)
}

fn load_base(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<EmbeddingMatrix, PipelineError> {
    let hash = config.stage_hash(Stage::TrainBase);
    manifest.require(Stage::TrainBase, &hash, out)?;
    load_checkpoint(out, BASE_CHECKPOINT, config.base_model.as_str(), &hash)
}

fn train_base_stage(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>, PipelineError> {
    let (store, _) = load_dataset(config, out, manifest)?;
    let base_config = config.base_train_config();
    let trained = match config.base_model {
        BaseModelKind::Pmf => train_pmf(&store, &base_config)?,
        BaseModelKind::Gcn => train_gcn(&store, &base_config)?,
    };
    info!("train-base: selected epoch {}", trained.selected_epoch);
    fs::create_dir_all(out.join("base"))?;
    let hash = config.stage_hash(Stage::TrainBase);
    Checkpoint::new(config.base_model.as_str(), base_config.seed, hash, trained.embeddings)
        .save(&out.join(BASE_CHECKPOINT))?;
    let mut w = csv::Writer::from_path(out.join(BASE_CURVE)).map_err(std::io::Error::from)?;
    for row in &trained.curve {
        w.serialize(row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(vec![BASE_CHECKPOINT.into(), BASE_CURVE.into()])
}

fn train_fair_stage(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>, PipelineError> {
    let (store, attributes) = load_dataset(config, out, manifest)?;
    let embeddings = load_base(config, out, manifest)?;
    let fair_config = config.fair_train_config();
    let outcome = train_adversarial(&embeddings, &store, &attributes, &config.summary_config(), &fair_config)?;
    if let Some(last) = outcome.curve.rows.last() {
        info!("train-fair: final epoch {last:?}");
    }
    fs::create_dir_all(out.join("fair"))?;
    Checkpoint::new(FAIR_KIND, fair_config.seed, config.stage_hash(Stage::TrainFair), outcome.model)
        .save(&out.join(FAIR_CHECKPOINT))?;
    outcome.curve.write_csv(&out.join(FAIR_CURVE))?;
    Ok(vec![FAIR_CHECKPOINT.into(), FAIR_CURVE.into()])
}

/// Embeddings the audit scores: base vectors or their filtered images.
fn audited_embeddings(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<EmbeddingMatrix, PipelineError> {
    let base = load_base(config, out, manifest)?;
    match config.audit_model {
        AuditTarget::Base => Ok(base),
        AuditTarget::Fair => {
            let hash = config.stage_hash(Stage::TrainFair);
            manifest.require(Stage::TrainFair, &hash, out)?;
            let model: FairModel = load_checkpoint(out, FAIR_CHECKPOINT, FAIR_KIND, &hash)?;
            Ok(model.filtered(&base)?)
        }
    }
}

fn audit_stage(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>, PipelineError> {
    let (store, attributes) = load_dataset(config, out, manifest)?;
    let embeddings = audited_embeddings(config, out, manifest)?;
    let evaluation = evaluate(config, &store, &attributes, &embeddings)?;
    fs::create_dir_all(out.join("audit"))?;
    let mut artifacts: Vec<PathBuf> = Vec::new();
    for (name, parity, opportunity) in &evaluation.group_metrics {
        for (label, metric) in [("statistical_parity", parity), ("equal_opportunity", opportunity)] {
            let rel = PathBuf::from(format!("audit/{name}_{label}.csv"));
            metric.write_csv(&out.join(&rel))?;
            artifacts.push(rel);
        }
    }
    fs::write(out.join(METRICS), evaluation.report.to_json() + "\n")?;
    artifacts.push(METRICS.into());
    Ok(artifacts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Per attribute: name, statistical parity, equal opportunity.
    pub group_metrics: Vec<(String, GroupMetric, GroupMetric)>,
}

/// Test-split RMSE, attacker leakage and group fairness of `embeddings`.
pub fn evaluate(
    config: &RunConfig,
    store: &RatingStore,
    attributes: &AttributeTable,
    embeddings: &EmbeddingMatrix,
) -> Result<Evaluation, PipelineError> {
    let test: Vec<_> = store.in_split(Split::Test).collect();
    let pairs = score_pairs(embeddings, test);
    let predictions: Vec<f64> = pairs.iter().map(|p| p.prediction).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.truth).collect();
    let rmse = rmse(&predictions, &truth)?;

    let attack = config.attack_config(thread_count());
    let mut leakage = Vec::new();
    if config.audit_leakage {
        let users = embeddings.users();
        for k in 0..attributes.attribute_count() {
            leakage.push(leakage_audit(&users, attributes, k, &attack)?);
        }
    }
    let mut fairness = Vec::new();
    let mut group_metrics = Vec::new();
    if config.audit_fairness {
        for k in 0..attributes.attribute_count() {
            let groups: Vec<Option<usize>> = (0..attributes.user_count()).map(|u| attributes.value(u, k)).collect();
            let sp = statistical_parity(&pairs, &groups, attributes.cardinality(k))?;
            let eo = equal_opportunity(&pairs, &groups, attributes.cardinality(k))?;
            let name = attributes.names()[k].clone();
            fairness.push(FairnessEntry {
                attribute: name.clone(),
                statistical_parity: sp.value,
                equal_opportunity: eo.value,
                scored_items: sp.scored_items,
                skipped_items: sp.skipped_items,
            });
            group_metrics.push((name, sp, eo));
        }
    }

    let mut seeds = std::collections::BTreeMap::new();
    seeds.insert("global".to_string(), config.seed);
    seeds.insert("split".to_string(), config.split_seed());
    seeds.insert("base".to_string(), config.base_train_config().seed);
    seeds.insert("fair".to_string(), config.fair_train_config().seed);
    seeds.insert("attacker".to_string(), attack.seed);
    let mut notes = vec![format!(
        "audited {} embeddings",
        match config.audit_model {
            AuditTarget::Base => "base",
            AuditTarget::Fair => "filtered",
        }
    )];
    if config.carve_validation > 0.0 {
        notes.push(format!(
            "validation: {}% of the training ratings carved out for model selection",
            config.carve_validation * 100.0
        ));
    }
    let report = MetricsReport {
        rmse,
        leakage,
        fairness,
        metadata: ReportMetadata {
            config_hash: config.stage_hash(Stage::Audit),
            seeds,
            notes,
        },
    };
    report.validate().map_err(PipelineError::ConfigInvalid)?;
    Ok(Evaluation { report, group_metrics })
}

fn report_stage(config: &RunConfig, out: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>, PipelineError> {
    manifest.require(Stage::Audit, &config.stage_hash(Stage::Audit), out)?;
    let report: MetricsReport = serde_json::from_str(&fs::read_to_string(out.join(METRICS))?)?;
    let merged = MergedReport {
        metrics: report.flat(),
        report,
    };
    fs::write(out.join(REPORT_JSON), serde_json::to_string_pretty(&merged)? + "\n")?;
    fs::write(out.join(REPORT_TABLE), merged.report.table())?;
    Ok(vec![REPORT_JSON.into(), REPORT_TABLE.into()])
}
