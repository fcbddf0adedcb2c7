//! Fairness-aware filtering of recommender embeddings on the user-item graph.
//!
//! Given user and item embeddings produced by any rating model, a bank of
//! per-attribute filters maps them into a space from which sensitive user
//! attributes cannot be predicted, neither from a user's own vector nor from
//! summaries of the user's neighborhood in the rating graph. Filters are
//! trained adversarially against per-attribute discriminators while keeping
//! rating prediction accurate.
//!
//! Modules:
//! - [`data`]: dataset parsing, splits, the bipartite rating graph.
//! - [`nn`]: dense numerics and MLPs with hand-written gradients.
//! - [`base`]: PMF and graph-convolution base recommenders.
//! - [`fair`]: filters, discriminators, summary networks, adversarial training.
//! - [`audit`]: accuracy, attribute-leakage attacks, group fairness metrics.
//! - [`pipeline`]: config-driven staged runs and the synthetic generator.

pub mod audit;
pub mod base;
pub mod data;
pub mod fair;
pub mod nn;
pub mod pipeline;
