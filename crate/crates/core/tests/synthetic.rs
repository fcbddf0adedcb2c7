use fairgo_core::audit::{leakage_audit, AttackConfig};
use fairgo_core::base::{train_pmf, BaseTrainConfig};
use fairgo_core::data::{split_ratings, SplitRatios};
use fairgo_core::pipeline::{generate_synthetic, SyntheticConfig};

fn base_auc(strength: f64, users: usize) -> f64 {
    let config = SyntheticConfig {
        strength,
        users,
        seed: 3,
        ..SyntheticConfig::default()
    };
    let (store, attributes) = generate_synthetic(&config).unwrap();
    let store = split_ratings(&store, SplitRatios::train_test(0.9, 0.1), 1).unwrap();
    let train = BaseTrainConfig {
        epochs: 300,
        learning_rate: 0.02,
        l2: 0.05,
        seed: 2,
        ..BaseTrainConfig::default()
    };
    let embeddings = train_pmf(&store, &train).unwrap().embeddings;
    leakage_audit(&embeddings.users(), &attributes, 0, &AttackConfig::default()).unwrap().value
}

#[test]
fn planted_attribute_is_recoverable() {
    let value = base_auc(1.0, 500);
    assert!(value >= 0.9, "AUC {value}");
}

#[test]
fn zero_strength_plants_nothing() {
    // enough users that attacker sampling noise stays well inside the band
    let value = base_auc(0.0, 2000);
    assert!((value - 0.5).abs() <= 0.05, "AUC {value}");
}
