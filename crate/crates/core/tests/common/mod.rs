#![allow(dead_code)]

use fairgo_core::base::EmbeddingMatrix;
use fairgo_core::data::{AttributeTable, BipartiteAdjacency, Rating, RatingStore, Split};
use fairgo_core::fair::{BatchObjective, FairModel, FairTrainConfig, SummaryConfig};
use fairgo_core::nn::gradcheck::{check, GradCheckReport};
use fairgo_core::nn::{init_matrix, rng_from_seed, InitScheme, Params};
use rand::Rng;

/// Five users, five items, two attributes with some labels missing.
pub struct Tiny {
    pub embeddings: EmbeddingMatrix,
    pub store: RatingStore,
    pub attributes: AttributeTable,
    pub graph: BipartiteAdjacency,
}

pub fn tiny(seed: u64) -> Tiny {
    let (users, items, dim) = (5, 5, 3);
    let mut rng = rng_from_seed(seed);
    let embeddings = EmbeddingMatrix::new(users, items, init_matrix(users + items, dim, InitScheme::Uniform(1.0), &mut rng)).unwrap();
    let mut ratings = Vec::new();
    for u in 0..users {
        for v in 0..items {
            // user 4 stays cold
            if u < 4 && (rng.gen_bool(0.6) || v == u) {
                ratings.push(Rating {
                    user: u,
                    item: v,
                    value: rng.gen_range(1.0..5.0),
                    split: Split::Train,
                });
            }
        }
    }
    let store = RatingStore::with_counts(users, items, ratings).unwrap();
    let values = vec![
        vec![Some(0), Some(2)],
        vec![Some(1), None],
        vec![None, Some(0)],
        vec![Some(1), Some(1)],
        vec![Some(0), Some(1)],
    ];
    let attributes = AttributeTable::new(vec!["gender".into(), "age".into()], vec![2, 3], values).unwrap();
    let graph = BipartiteAdjacency::build(&store);
    Tiny {
        embeddings,
        store,
        attributes,
        graph,
    }
}

pub fn tiny_model(t: &Tiny, summary: &SummaryConfig, seed: u64) -> FairModel {
    let config = FairTrainConfig {
        filter_hidden: vec![4],
        discriminator_hidden: vec![4],
        seed,
        ..Default::default()
    };
    let mut s = summary.clone();
    s.aggregator_hidden = vec![4, 3];
    FairModel::initialize(3, t.attributes.cardinalities(), &s, &config).unwrap()
}

fn objective<'a>(t: &'a Tiny, summary: &'a SummaryConfig) -> BatchObjective<'a> {
    let mut rng = rng_from_seed(0);
    BatchObjective::new(&t.embeddings, &t.graph, &t.attributes, summary, t.store.ratings(), 512, true, &mut rng)
}

/// Filter-phase loss `mse − λ (ce_N + ce_S)` against finite differences over
/// every filter parameter.
pub fn check_filters(t: &Tiny, model: &FairModel, lambda: f64) -> GradCheckReport {
    let obj = objective(t, &model.summary);
    let (_, grads) = obj.filter_phase(model, lambda).unwrap();
    check(&model.filters, &grads.flatten(), |filters| {
        let m = FairModel {
            filters: filters.clone(),
            ..model.clone()
        };
        let (v, _) = obj.filter_phase(&m, lambda).unwrap();
        v.mse - lambda * (v.node_ce + v.summary_ce)
    })
}

/// Discriminator-phase loss `ce_N + ce_S` over discriminator parameters and,
/// when present, the aggregation network.
pub fn check_adversary(t: &Tiny, model: &FairModel) -> (GradCheckReport, Option<GradCheckReport>) {
    let obj = objective(t, &model.summary);
    let (_, grads) = obj.discriminator_phase(model).unwrap();
    let loss = |m: &FairModel| {
        let (v, _) = obj.discriminator_phase(m).unwrap();
        v.node_ce + v.summary_ce
    };
    let disc = check(&model.discriminators, &grads.discriminators.flatten(), |d| {
        loss(&FairModel {
            discriminators: d.clone(),
            ..model.clone()
        })
    });
    let agg = model.aggregator.as_ref().map(|a| {
        check(a, &grads.aggregator.as_ref().unwrap().flatten(), |a| {
            loss(&FairModel {
                aggregator: Some(a.clone()),
                ..model.clone()
            })
        })
    });
    (disc, agg)
}
