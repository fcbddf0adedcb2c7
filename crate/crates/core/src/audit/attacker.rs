//! Post-hoc attribute inference: a softmax-linear classifier trained on 80% of
//! the labeled users and scored on the rest.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{auc, micro_f1, AuditError};
use crate::base::EmbeddingMatrix;
use crate::data::{AttributeTable, BipartiteAdjacency};
use crate::fair::propagate_orders;
use crate::nn::{derive_seed, rng_from_seed, softmax, softmax_cross_entropy, AdamConfig, AdamState, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Independent splits averaged into the reported value.
    pub repetitions: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Share of the training users held out for early stopping.
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Worker threads for the repetitions; results do not depend on it.
    pub threads: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            repetitions: 5,
            seed: 0,
            test_fraction: 0.2,
            validation_fraction: 0.2,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            max_epochs: 500,
            patience: 25,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageMetric {
    Auc,
    MicroF1,
}

impl LeakageMetric {
    pub fn suffix(&self) -> &'static str {
        match self {
            Self::Auc => "auc",
            Self::MicroF1 => "f1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageResult {
    pub attribute: String,
    pub metric: LeakageMetric,
    /// Mean over repetitions.
    pub value: f64,
    pub per_repetition: Vec<f64>,
}

/// Which user vectors the attacker sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// The user's own embedding row.
    Embedding,
    /// `h^l` from rating-weighted propagation of the embeddings.
    Order(usize),
}

pub fn user_features(
    embeddings: &EmbeddingMatrix,
    graph: &BipartiteAdjacency,
    source: FeatureSource,
) -> Result<Matrix, AuditError> {
    let users: Vec<usize> = (0..embeddings.user_count()).collect();
    match source {
        FeatureSource::Embedding => Ok(embeddings.users()),
        FeatureSource::Order(l) => {
            let prop = propagate_orders(graph, embeddings.matrix(), l).map_err(|e| AuditError::Features(e.to_string()))?;
            Ok(prop.layer(l).gather_rows(&users))
        }
    }
}

struct Split {
    train: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

fn stratified_split(
    labeled: &[(usize, usize)],
    cardinality: usize,
    config: &AttackConfig,
    seed: u64,
    attribute: &str,
) -> Result<Split, AuditError> {
    let mut rng = rng_from_seed(seed);
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..cardinality {
        let mut members: Vec<usize> = labeled.iter().filter(|&&(_, c)| c == class).map(|&(u, _)| u).collect();
        if members.is_empty() {
            continue;
        }
        let n_test = (members.len() as f64 * config.test_fraction).round() as usize;
        if n_test < 2 || members.len() - n_test < 2 {
            return Err(AuditError::InsufficientLabels {
                attribute: attribute.to_string(),
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let (test, rest) = members.split_at(n_test);
        let n_val = (rest.len() as f64 * config.validation_fraction).floor() as usize;
        let (val, train) = rest.split_at(n_val.min(rest.len() - 1));
        split.test.extend(test);
        split.validation.extend(val);
        split.train.extend(train);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Softmax-linear classifier over standardized features.
struct LinearAttacker {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    weight: Matrix,
    bias: Vec<f64>,
}

impl LinearAttacker {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.inv_std).map(|((v, m), s)| (v - m) * s).collect()
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, zi) in z.iter().enumerate() {
            if *zi != 0.0 {
                crate::nn::axpy(&mut out, *zi, self.weight.row(i));
            }
        }
        out
    }

    fn loss(&self, rows: &[Vec<f64>], labels: &[usize]) -> f64 {
        rows.iter().zip(labels).map(|(z, &y)| softmax_cross_entropy(&self.logits(z), y).0).sum::<f64>() / rows.len().max(1) as f64
    }

    fn fit(features: &Matrix, train: &[usize], validation: &[usize], labels: &[usize], classes: usize, config: &AttackConfig) -> Self {
        let d = features.cols();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for &u in train {
            crate::nn::axpy(&mut mean, 1.0 / n, features.row(u));
        }
        let mut var = vec![0.0; d];
        for &u in train {
            for (j, v) in features.row(u).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2) / n;
            }
        }
        let inv_std = var.iter().map(|v| if *v > 1e-24 { 1.0 / v.sqrt() } else { 0.0 }).collect();
        let mut model = Self {
            mean,
            inv_std,
            weight: Matrix::zeros(d, classes),
            bias: vec![0.0; classes],
        };
        let z_train: Vec<Vec<f64>> = train.iter().map(|&u| model.standardize(features.row(u))).collect();
        let z_val: Vec<Vec<f64>> = validation.iter().map(|&u| model.standardize(features.row(u))).collect();
        let y_train: Vec<usize> = train.iter().map(|&u| labels[u]).collect();
        let y_val: Vec<usize> = validation.iter().map(|&u| labels[u]).collect();
        let adam_config = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::with_learning_rate(config.learning_rate)
        };
        let mut adam = AdamState::new(adam_config, &[d * classes, classes]);
        let mut best = (f64::INFINITY, model.weight.clone(), model.bias.clone());
        let mut stale = 0;
        for _ in 0..config.max_epochs {
            let mut g_w = Matrix::zeros(d, classes);
            let mut g_b = vec![0.0; classes];
            for (z, &y) in z_train.iter().zip(&y_train) {
                let (_, g) = softmax_cross_entropy(&model.logits(z), y);
                for (i, zi) in z.iter().enumerate() {
                    crate::nn::axpy(g_w.row_mut(i), zi / n, &g);
                }
                crate::nn::axpy(&mut g_b, 1.0 / n, &g);
            }
            crate::nn::axpy(g_w.as_mut_slice(), 2.0 * config.weight_decay, model.weight.as_slice());
            adam.step(&mut [model.weight.as_mut_slice(), &mut model.bias], &[g_w.as_slice(), &g_b])
                .expect("fixed shapes");
            if z_val.is_empty() {
                continue;
            }
            let val_loss = model.loss(&z_val, &y_val);
            if val_loss < best.0 - 1e-7 {
                best = (val_loss, model.weight.clone(), model.bias.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        if best.0.is_finite() {
            model.weight = best.1;
            model.bias = best.2;
        }
        model
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&self.standardize(x)))
    }
}

/// Attacks attribute `k` with user feature rows `features`. Binary attributes
/// report AUC on the held-out users, others micro-F1.
pub fn leakage_audit(
    features: &Matrix,
    attributes: &AttributeTable,
    k: usize,
    config: &AttackConfig,
) -> Result<LeakageResult, AuditError> {
    if features.rows() != attributes.user_count() {
        return Err(AuditError::LengthMismatch(features.rows(), attributes.user_count()));
    }
    let name = attributes.names()[k].clone();
    let classes = attributes.cardinality(k);
    let labeled = attributes.labeled(k);
    let mut dense_labels = vec![0usize; attributes.user_count()];
    for &(u, c) in &labeled {
        dense_labels[u] = c;
    }
    let metric = if classes == 2 { LeakageMetric::Auc } else { LeakageMetric::MicroF1 };
    let run = |rep: usize| -> Result<f64, AuditError> {
        let seed = derive_seed(config.seed, rep as u64);
        let split = stratified_split(&labeled, classes, config, seed, &name)?;
        let attacker = LinearAttacker::fit(features, &split.train, &split.validation, &dense_labels, classes, config);
        let probs: Vec<Vec<f64>> = split.test.iter().map(|&u| attacker.probabilities(features.row(u))).collect();
        match metric {
            LeakageMetric::Auc => {
                let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
                let truth: Vec<bool> = split.test.iter().map(|&u| dense_labels[u] == 1).collect();
                auc(&scores, &truth)
            }
            LeakageMetric::MicroF1 => {
                let predicted: Vec<usize> = probs
                    .iter()
                    .map(|p| (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a))).unwrap_or(0))
                    .collect();
                let truth: Vec<usize> = split.test.iter().map(|&u| dense_labels[u]).collect();
                micro_f1(&predicted, &truth)
            }
        }
    };
    let reps: Vec<usize> = (0..config.repetitions.max(1)).collect();
    let mut per_repetition = Vec::with_capacity(reps.len());
    for chunk in reps.chunks(config.threads.max(1)) {
        let results: Vec<Result<f64, AuditError>> = if chunk.len() == 1 {
            vec![run(chunk[0])]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|&rep| scope.spawn(move || run(rep))).collect();
                handles.into_iter().map(|h| h.join().expect("attacker thread panicked")).collect()
            })
        };
        for r in results {
            per_repetition.push(r?);
        }
    }
    Ok(LeakageResult {
        attribute: name,
        metric,
        value: per_repetition.iter().sum::<f64>() / per_repetition.len() as f64,
        per_repetition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_matrix, InitScheme};

    fn binary_table(n: usize) -> AttributeTable {
        AttributeTable::new(vec!["gender".into()], vec![2], (0..n).map(|u| vec![Some(u % 2)]).collect()).unwrap()
    }

    #[test]
    fn constant_features_carry_no_signal() {
        let attrs = binary_table(200);
        let features = Matrix::from_vec(200, 3, vec![0.7; 600]).unwrap();
        let r = leakage_audit(&features, &attrs, 0, &AttackConfig::default()).unwrap();
        assert!((r.value - 0.5).abs() <= 0.05, "{r:?}");
        assert_eq!(r.metric, LeakageMetric::Auc);
    }

    #[test]
    fn one_hot_attribute_is_recovered() {
        let attrs = binary_table(200);
        let mut features = Matrix::zeros(200, 2);
        for u in 0..200 {
            features.row_mut(u)[u % 2] = 1.0;
        }
        let r = leakage_audit(&features, &attrs, 0, &AttackConfig::default()).unwrap();
        assert!(r.value >= 0.99, "{r:?}");
    }

    #[test]
    fn multiclass_reports_micro_f1() {
        let n = 150;
        let attrs = AttributeTable::new(vec!["age".into()], vec![3], (0..n).map(|u| vec![Some(u % 3)]).collect()).unwrap();
        let mut features = Matrix::zeros(n, 3);
        for u in 0..n {
            features.row_mut(u)[u % 3] = 1.0;
        }
        let r = leakage_audit(&features, &attrs, 0, &AttackConfig::default()).unwrap();
        assert_eq!(r.metric, LeakageMetric::MicroF1);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let attrs = binary_table(120);
        let x = init_matrix(120, 4, InitScheme::Uniform(1.0), &mut rng_from_seed(5));
        let one = leakage_audit(&x, &attrs, 0, &AttackConfig::default()).unwrap();
        let config = AttackConfig {
            threads: 4,
            ..AttackConfig::default()
        };
        let four = leakage_audit(&x, &attrs, 0, &config).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn audit_is_deterministic() {
        let attrs = binary_table(120);
        let mut rng = rng_from_seed(3);
        let features = init_matrix(120, 4, InitScheme::Uniform(1.0), &mut rng);
        let a = leakage_audit(&features, &attrs, 0, &AttackConfig::default()).unwrap();
        let b = leakage_audit(&features, &attrs, 0, &AttackConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_repetition.len(), 5);
    }

    #[test]
    fn sparse_classes_are_rejected() {
        let values = (0..40).map(|u| vec![Some(if u < 3 { 1 } else { 0 })]).collect();
        let attrs = AttributeTable::new(vec!["gender".into()], vec![2], values).unwrap();
        let features = Matrix::zeros(40, 2);
        assert!(matches!(
            leakage_audit(&features, &attrs, 0, &AttackConfig::default()),
            Err(AuditError::InsufficientLabels { class: 1, .. })
        ));
    }
}
