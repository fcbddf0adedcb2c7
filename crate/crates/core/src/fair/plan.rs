//! Per-batch restriction of the multi-order propagation to the rows a batch
//! actually reads.
//!
//! Level 0 holds filtered vectors for a sorted node set; level `l` holds
//! `h^l` for the nodes whose summaries are needed, each a weighted mean over
//! (possibly sampled) neighbors present in level `l−1`. With every node's
//! degree at most the cap, the rows equal the whole-graph propagation.

use rand::seq::index::sample;
use rand::Rng;

use crate::data::BipartiteAdjacency;
use crate::nn::{axpy, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Level {
    pub nodes: Vec<usize>,
    /// Per node: (row in previous level, normalized weight).
    pub inputs: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PropagationPlan {
    /// Sorted nodes whose filtered vectors are computed.
    pub base: Vec<usize>,
    pub levels: Vec<Level>,
    /// Sorted summary users with at least one training neighbor.
    pub users: Vec<usize>,
}

fn sorted_union(a: &[usize], b: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().copied().chain(b).collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn row_of(nodes: &[usize], node: usize) -> usize {
    nodes.binary_search(&node).expect("node present in plan level")
}

impl PropagationPlan {
    /// Plans `order` levels of summaries for `users` plus filtered vectors for
    /// `extra` nodes. Neighbor lists longer than `cap` are subsampled without
    /// replacement.
    pub fn build<R: Rng + ?Sized>(
        graph: &BipartiteAdjacency,
        users: &[usize],
        extra: &[usize],
        order: usize,
        cap: usize,
        rng: &mut R,
    ) -> Self {
        let users: Vec<usize> = sorted_union(&[], users.iter().copied().filter(|&u| graph.weight_sum(u) > 0.0));
        if order == 0 || users.is_empty() {
            return Self {
                base: sorted_union(extra, []),
                levels: Vec::new(),
                users,
            };
        }

        // Top-down: which nodes each level needs and which neighbors they read.
        let mut needed = users.clone();
        let mut sampled: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(order);
        let mut level_nodes: Vec<Vec<usize>> = Vec::with_capacity(order);
        for l in (1..=order).rev() {
            let mut lists = Vec::with_capacity(needed.len());
            let mut below = Vec::new();
            for &i in &needed {
                let (targets, weights) = graph.neighbors(i);
                let picked: Vec<(usize, f64)> = if targets.len() > cap {
                    let mut idx = sample(rng, targets.len(), cap).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|p| (targets[p], weights[p])).collect()
                } else {
                    targets.iter().copied().zip(weights.iter().copied()).collect()
                };
                below.extend(picked.iter().map(|&(j, _)| j));
                lists.push(picked);
            }
            sampled.push(lists);
            level_nodes.push(needed.clone());
            needed = if l > 1 {
                sorted_union(&users, below)
            } else {
                sorted_union(extra, below)
            };
        }
        sampled.reverse();
        level_nodes.reverse();
        let base = needed;

        let mut levels: Vec<Level> = Vec::with_capacity(order);
        for (nodes, lists) in level_nodes.into_iter().zip(sampled) {
            let prev: &[usize] = levels.last().map_or(&base, |lv| &lv.nodes);
            let inputs = lists
                .into_iter()
                .map(|picked| {
                    let total: f64 = picked.iter().map(|&(_, w)| w).sum();
                    if total == 0.0 {
                        return Vec::new();
                    }
                    picked.into_iter().map(|(j, w)| (row_of(prev, j), w / total)).collect()
                })
                .collect();
            levels.push(Level { nodes, inputs });
        }
        Self { base, levels, users }
    }

    /// `h¹..h^L` on the planned rows from level-0 vectors aligned with `base`.
    pub fn forward(&self, base_rows: &Matrix) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let prev = out.last().unwrap_or(base_rows);
            let mut h = Matrix::zeros(level.nodes.len(), base_rows.cols());
            for (i, inputs) in level.inputs.iter().enumerate() {
                let row = h.row_mut(i);
                for &(j, w) in inputs {
                    axpy(row, w, prev.row(j));
                }
            }
            out.push(h);
        }
        out
    }

    /// Accumulates level gradients down to the base rows. `level_grads[l]`
    /// matches the shape of `forward(..)[l]` and is consumed.
    pub fn backward(&self, mut level_grads: Vec<Matrix>, base_grad: &mut Matrix) {
        for l in (0..self.levels.len()).rev() {
            let upper = level_grads.pop().expect("one gradient per level");
            let target: &mut Matrix = match level_grads.last_mut() {
                Some(m) => m,
                None => &mut *base_grad,
            };
            for (i, inputs) in self.levels[l].inputs.iter().enumerate() {
                let g = upper.row(i);
                for &(j, w) in inputs {
                    axpy(target.row_mut(j), w, g);
                }
            }
        }
    }

    /// Row of `user` in each level, `h¹` first.
    pub fn user_rows(&self, user: usize) -> Vec<usize> {
        self.levels.iter().map(|lv| row_of(&lv.nodes, user)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fair::propagate_orders;
    use crate::nn::{init_matrix, rng_from_seed, InitScheme};

    fn toy() -> BipartiteAdjacency {
        BipartiteAdjacency::from_edges(
            4,
            4,
            [(0, 0, 4.0), (0, 1, 2.0), (1, 1, 5.0), (2, 2, 1.0), (2, 0, 3.0), (3, 3, 2.0), (1, 3, 1.0)],
        )
    }

    #[test]
    fn uncapped_plan_matches_whole_graph() {
        let g = toy();
        let mut rng = rng_from_seed(4);
        let x = init_matrix(8, 3, InitScheme::Uniform(1.0), &mut rng);
        let full = propagate_orders(&g, &x, 3).unwrap();
        let plan = PropagationPlan::build(&g, &[0, 2], &[5], 3, 512, &mut rng);
        let base_rows = x.gather_rows(&plan.base);
        let levels = plan.forward(&base_rows);
        for u in [0, 2] {
            for (l, row) in plan.user_rows(u).into_iter().enumerate() {
                for (a, b) in levels[l].row(row).iter().zip(full.layer(l + 1).row(u)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        assert!(plan.base.contains(&5));
    }

    #[test]
    fn backward_is_the_adjoint() {
        let g = toy();
        let mut rng = rng_from_seed(9);
        let plan = PropagationPlan::build(&g, &[0, 1, 3], &[], 2, 512, &mut rng);
        let x = init_matrix(plan.base.len(), 2, InitScheme::Uniform(1.0), &mut rng);
        let levels = plan.forward(&x);
        let grads: Vec<Matrix> = levels
            .iter()
            .map(|h| init_matrix(h.rows(), h.cols(), InitScheme::Uniform(1.0), &mut rng))
            .collect();
        // <g, forward(x)> is linear in x, so its gradient is backward(g).
        let lhs: f64 = levels
            .iter()
            .zip(&grads)
            .map(|(h, g)| h.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        plan.backward(grads, &mut dx);
        let rhs: f64 = x.as_slice().iter().zip(dx.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn cold_users_are_dropped_and_caps_apply() {
        let g = BipartiteAdjacency::from_edges(2, 6, (0..6).map(|v| (0, v, 1.0)));
        let mut rng = rng_from_seed(1);
        let plan = PropagationPlan::build(&g, &[0, 1], &[], 1, 3, &mut rng);
        assert_eq!(plan.users, vec![0]);
        assert_eq!(plan.levels[0].inputs[0].len(), 3);
        let total: f64 = plan.levels[0].inputs[0].iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
