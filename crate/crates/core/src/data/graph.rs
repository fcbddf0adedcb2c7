//! The user-item rating graph.
//!
//! Nodes `0..M` are users and `M..M+N` are items. The adjacency is the
//! symmetric block matrix `[[0, R], [Rᵀ, 0]]` built from training ratings, so
//! `a(u, M+v) = a(M+v, u) = r_uv` and there are no user-user or item-item
//! edges.

use std::collections::BTreeMap;

use super::{DataError, RatingStore, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteAdjacency {
    user_count: usize,
    item_count: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl BipartiteAdjacency {
    /// Builds the graph from the training triples of `store`. Neighbor lists
    /// are sorted by node index.
    pub fn build(store: &RatingStore) -> Self {
        Self::from_edges(
            store.user_count(),
            store.item_count(),
            store.in_split(Split::Train).map(|r| (r.user, r.item, r.value)),
        )
    }

    /// Builds the graph from (user, item, weight) edges.
    pub fn from_edges(user_count: usize, item_count: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let n = user_count + item_count;
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (u, v, w) in edges {
            assert!(u < user_count && v < item_count, "edge ({u}, {v}) out of range");
            lists[u].push((user_count + v, w));
            lists[user_count + v].push((u, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_by_key(|&(j, _)| j);
            for (j, w) in list {
                targets.push(j);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Self {
            user_count,
            item_count,
            offsets,
            targets,
            weights,
        }
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn node_count(&self) -> usize {
        self.user_count + self.item_count
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.user_count + item
    }

    pub fn is_user(&self, node: usize) -> bool {
        node < self.user_count
    }

    /// Number of stored directed entries, i.e. twice the training triple count.
    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, node: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[node]..self.offsets[node + 1];
        (&self.targets[range.clone()], &self.weights[range])
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn weight_sum(&self, node: usize) -> f64 {
        self.neighbors(node).1.iter().sum()
    }

    /// `a_ij`, zero when there is no edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (targets, weights) = self.neighbors(i);
        targets.binary_search(&j).map_or(0.0, |pos| weights[pos])
    }

    pub fn check_node(&self, node: usize) -> Result<(), DataError> {
        if node >= self.node_count() {
            return Err(DataError::NodeOutOfRange {
                node,
                count: self.node_count(),
            });
        }
        Ok(())
    }
}

/// Per-hop neighborhoods of `node` up to `order` hops.
///
/// Hop 1 lists the direct neighbors with their edge weights. Hop `l` lists
/// every neighbor of a hop-`(l−1)` node, deduplicated, with the summed weight
/// of the edges reaching it from that hop. The ego node itself reappears at
/// even hops, as in the propagation used for summaries. Lists are sorted by
/// node index.
pub fn ego_neighbors(
    adjacency: &BipartiteAdjacency,
    node: usize,
    order: usize,
) -> Result<Vec<Vec<(usize, f64)>>, DataError> {
    adjacency.check_node(node)?;
    let mut hops = Vec::with_capacity(order);
    let mut frontier = vec![node];
    for _ in 0..order {
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in &frontier {
            let (targets, weights) = adjacency.neighbors(i);
            for (&j, &w) in targets.iter().zip(weights) {
                *next.entry(j).or_default() += w;
            }
        }
        frontier = next.keys().copied().collect();
        hops.push(next.into_iter().collect());
    }
    Ok(hops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use proptest::prelude::*;

    fn store(users: usize, items: usize, triples: &[(usize, usize, f64)]) -> RatingStore {
        RatingStore::with_counts(
            users,
            items,
            triples
                .iter()
                .map(|&(user, item, value)| Rating {
                    user,
                    item,
                    value,
                    split: Split::Train,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_edge() {
        let adj = BipartiteAdjacency::build(&store(1, 1, &[(0, 0, 5.0)]));
        assert_eq!(adj.node_count(), 2);
        assert_eq!(adj.weight(0, 1), 5.0);
        assert_eq!(adj.weight(1, 0), 5.0);
        assert_eq!(adj.weight(0, 0), 0.0);
        assert_eq!(adj.weight(1, 1), 0.0);
        assert_eq!(adj.edge_count(), 2);
    }

    #[test]
    fn no_training_triples_gives_empty_graph() {
        let mut s = store(2, 2, &[(0, 0, 3.0)]);
        s = s.with_splits(vec![Split::Test]).unwrap();
        let adj = BipartiteAdjacency::build(&s);
        assert_eq!(adj.edge_count(), 0);
        assert!((0..4).all(|i| adj.degree(i) == 0));
    }

    #[test]
    fn ego_hops() {
        // u0 rated v0, v1; u1 rated v1; u2 rated v2.
        let adj = BipartiteAdjacency::build(&store(3, 3, &[(0, 0, 4.0), (0, 1, 2.0), (1, 1, 5.0), (2, 2, 1.0)]));
        let hops = ego_neighbors(&adj, 0, 2).unwrap();
        assert_eq!(hops[0], vec![(3, 4.0), (4, 2.0)]);
        let hop2: Vec<usize> = hops[1].iter().map(|&(j, _)| j).collect();
        assert_eq!(hop2, vec![0, 1]);
        assert_eq!(hops[1][0].1, 6.0);

        let isolated = BipartiteAdjacency::build(&store(2, 1, &[(0, 0, 3.0)]));
        let hops = ego_neighbors(&isolated, 1, 3).unwrap();
        assert!(hops.iter().all(Vec::is_empty));
        assert!(matches!(ego_neighbors(&isolated, 7, 1), Err(DataError::NodeOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn symmetric_and_bipartite(edges in prop::collection::btree_set((0usize..6, 0usize..5), 0..30)) {
            let triples: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v)| (u, v, 1.0 + ((u * 7 + v) % 5) as f64)).collect();
            let adj = BipartiteAdjacency::build(&store(6, 5, &triples));
            prop_assert_eq!(adj.edge_count(), 2 * triples.len());
            for i in 0..adj.node_count() {
                for j in 0..adj.node_count() {
                    prop_assert_eq!(adj.weight(i, j), adj.weight(j, i));
                    if adj.weight(i, j) != 0.0 {
                        prop_assert!(adj.is_user(i) != adj.is_user(j));
                    }
                }
            }
        }
    }
}
