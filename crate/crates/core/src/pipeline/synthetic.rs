//! Planted-attribute rating data.
//!
//! User factors are `[z, b_1, .., b_K]`: a free block `z ~ N(0, σ_u²)` and one
//! two-dimensional block per planted attribute,
//! `b_k = a · (s · c_k[x_uk] + √(1 − s²) · n)` with `n ~ N(0, I)` and class
//! centroids `c_k[j]` evenly spaced on the unit circle. Item factors are
//! `N(0, σ_v²)` in every coordinate. Each user rates `max(1, round(density ·
//! items))` distinct items chosen uniformly, with
//! `r = clamp(3 + uᵀv + ε, 1, 5)`, `ε ~ N(0, σ_ε²)`. Classes are uniform.
//! All ratings are tagged as training data; splitting happens at ingest.

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::{AttributeTable, Rating, RatingStore, Split};
use crate::nn::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttribute {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub density: f64,
    pub attributes: Vec<PlantedAttribute>,
    /// Correlation between a user's attribute block and its class centroid.
    pub strength: f64,
    pub free_dim: usize,
    pub user_scale: f64,
    pub attribute_scale: f64,
    pub item_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 500,
            items: 300,
            density: 0.05,
            attributes: vec![PlantedAttribute {
                name: "gender".into(),
                cardinality: 2,
            }],
            strength: 1.0,
            free_dim: 8,
            user_scale: 0.25,
            attribute_scale: 0.4,
            item_scale: 0.5,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ParamInvalid(m));
        if self.users == 0 || self.items == 0 {
            return bad("users and items must be positive".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return bad(format!("strength {} outside [0, 1]", self.strength));
        }
        let scales = [self.user_scale, self.attribute_scale, self.item_scale, self.noise];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad(format!("scales must be finite and non-negative: {scales:?}"));
        }
        if let Some(a) = self.attributes.iter().find(|a| a.cardinality < 2 || a.name.is_empty()) {
            return bad(format!("attribute {:?} needs a name and at least 2 classes", a.name));
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(RatingStore, AttributeTable), PipelineError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let k = config.attributes.len();
    let rank = config.free_dim + 2 * k;

    let classes: Vec<Vec<Option<usize>>> = (0..config.users)
        .map(|_| config.attributes.iter().map(|a| Some(rng.gen_range(0..a.cardinality))).collect())
        .collect();
    let noise_weight = (1.0 - config.strength * config.strength).sqrt();
    let users: Vec<Vec<f64>> = classes
        .iter()
        .map(|labels| {
            let mut u: Vec<f64> = (0..config.free_dim).map(|_| config.user_scale * normal(&mut rng)).collect();
            for (attr, label) in config.attributes.iter().zip(labels) {
                let angle = TAU * label.unwrap_or(0) as f64 / attr.cardinality as f64;
                for centroid in [angle.cos(), angle.sin()] {
                    let n = normal(&mut rng);
                    u.push(config.attribute_scale * (config.strength * centroid + noise_weight * n));
                }
            }
            u
        })
        .collect();
    let items: Vec<Vec<f64>> = (0..config.items)
        .map(|_| (0..rank).map(|_| config.item_scale * normal(&mut rng)).collect())
        .collect();

    let per_user = ((config.density * config.items as f64).round() as usize).clamp(1, config.items);
    let mut ratings = Vec::with_capacity(per_user * config.users);
    for (user, u) in users.iter().enumerate() {
        let mut picked = sample(&mut rng, config.items, per_user).into_vec();
        picked.sort_unstable();
        for item in picked {
            let score: f64 = u.iter().zip(&items[item]).map(|(a, b)| a * b).sum();
            let value = (3.0 + score + config.noise * normal(&mut rng)).clamp(1.0, 5.0);
            ratings.push(Rating {
                user,
                item,
                value,
                split: Split::Train,
            });
        }
    }

    let store = RatingStore::new(
        (0..config.users).map(|u| format!("u{u}")).collect(),
        (0..config.items).map(|v| format!("i{v}")).collect(),
        ratings,
    )?;
    let attributes = AttributeTable::new(
        config.attributes.iter().map(|a| a.name.clone()).collect(),
        config.attributes.iter().map(|a| a.cardinality).collect(),
        classes,
    )?;
    Ok((store, attributes))
}
