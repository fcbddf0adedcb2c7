//! Group fairness over observed test pairs.
//!
//! Per item, raters are grouped by the attribute value. A binary attribute
//! scores the item as `|m_0 − m_1|` and needs both groups among its raters;
//! a multi-valued attribute scores the population standard deviation of the
//! group means present among its raters. Items without a scorable set of
//! groups are skipped and counted. The metric is the mean item score.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AuditError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub user: usize,
    pub item: usize,
    pub prediction: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemGroupStats {
    pub item: usize,
    /// Per-group mean of the measured quantity; `None` for absent groups.
    pub group_means: Vec<Option<f64>>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetric {
    pub value: f64,
    pub scored_items: usize,
    pub skipped_items: usize,
    pub per_item: Vec<ItemGroupStats>,
}

impl GroupMetric {
    /// One row per scored item: `item,score,group_0,..` with empty cells for
    /// absent groups.
    pub fn write_csv(&self, path: &Path) -> Result<(), AuditError> {
        let mut w = csv::Writer::from_path(path)?;
        let groups = self.per_item.first().map_or(0, |s| s.group_means.len());
        let mut header = vec!["item".to_string(), "score".to_string()];
        header.extend((0..groups).map(|g| format!("group_{g}")));
        w.write_record(&header)?;
        for s in &self.per_item {
            let mut rec = vec![s.item.to_string(), s.score.to_string()];
            rec.extend(s.group_means.iter().map(|m| m.map_or(String::new(), |v| v.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn group_metric(
    pairs: &[ScoredPair],
    groups: &[Option<usize>],
    cardinality: usize,
    quantity: impl Fn(&ScoredPair) -> f64,
) -> Result<GroupMetric, AuditError> {
    let mut per_item: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for p in pairs {
        let entry = per_item.entry(p.item).or_insert_with(|| vec![(0.0, 0); cardinality]);
        if let Some(Some(g)) = groups.get(p.user) {
            entry[*g].0 += quantity(p);
            entry[*g].1 += 1;
        }
    }
    let mut stats = Vec::new();
    let mut skipped = 0;
    for (item, sums) in per_item {
        let means: Vec<Option<f64>> = sums.iter().map(|&(s, n)| (n > 0).then(|| s / n as f64)).collect();
        let present: Vec<f64> = means.iter().flatten().copied().collect();
        let score = if cardinality == 2 {
            match (means[0], means[1]) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            }
        } else if present.is_empty() {
            None
        } else {
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            Some((present.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / present.len() as f64).sqrt())
        };
        match score {
            Some(score) => stats.push(ItemGroupStats {
                item,
                group_means: means,
                score,
            }),
            None => skipped += 1,
        }
    }
    if stats.is_empty() {
        return Err(AuditError::NoScoredItems);
    }
    Ok(GroupMetric {
        value: stats.iter().map(|s| s.score).sum::<f64>() / stats.len() as f64,
        scored_items: stats.len(),
        skipped_items: skipped,
        per_item: stats,
    })
}

/// Disparity of mean predicted ratings across groups.
pub fn statistical_parity(pairs: &[ScoredPair], groups: &[Option<usize>], cardinality: usize) -> Result<GroupMetric, AuditError> {
    group_metric(pairs, groups, cardinality, |p| p.prediction)
}

/// Disparity of mean absolute errors across groups.
pub fn equal_opportunity(pairs: &[ScoredPair], groups: &[Option<usize>], cardinality: usize) -> Result<GroupMetric, AuditError> {
    group_metric(pairs, groups, cardinality, |p| (p.prediction - p.truth).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(user: usize, item: usize, prediction: f64, truth: f64) -> ScoredPair {
        ScoredPair {
            user,
            item,
            prediction,
            truth,
        }
    }

    #[test]
    fn identical_groups_give_zero() {
        let pairs = [pair(0, 0, 3.0, 4.0), pair(1, 0, 3.0, 4.0), pair(0, 1, 2.5, 2.0), pair(1, 1, 2.5, 2.0)];
        let groups = [Some(0), Some(1)];
        assert_eq!(statistical_parity(&pairs, &groups, 2).unwrap().value, 0.0);
        assert_eq!(equal_opportunity(&pairs, &groups, 2).unwrap().value, 0.0);
    }

    #[test]
    fn single_group_under_std_form_is_zero() {
        let pairs = [pair(0, 0, 3.0, 4.0), pair(1, 0, 5.0, 4.0)];
        let groups = [Some(2), Some(2)];
        assert_eq!(statistical_parity(&pairs, &groups, 3).unwrap().value, 0.0);
    }

    #[test]
    fn binary_parity_arithmetic() {
        // male mean 4.0, female mean 3.0 on one item
        let pairs = [pair(0, 0, 4.5, 4.0), pair(1, 0, 3.5, 3.0), pair(2, 0, 3.0, 3.0), pair(3, 0, 3.0, 3.0)];
        let groups = [Some(1), Some(1), Some(0), Some(0)];
        assert_eq!(statistical_parity(&pairs, &groups, 2).unwrap().value, 1.0);
    }

    #[test]
    fn binary_opportunity_arithmetic() {
        // group MAEs 1.0 and 0.5
        let pairs = [pair(0, 0, 4.0, 3.0), pair(1, 0, 2.0, 3.0), pair(2, 0, 3.5, 3.0)];
        let groups = [Some(0), Some(0), Some(1)];
        assert_eq!(equal_opportunity(&pairs, &groups, 2).unwrap().value, 0.5);
    }

    #[test]
    fn items_missing_a_group_are_skipped() {
        let pairs = [pair(0, 0, 4.0, 4.0), pair(1, 0, 3.0, 3.0), pair(0, 1, 5.0, 5.0), pair(2, 2, 1.0, 1.0)];
        let groups = [Some(0), Some(1), None];
        let m = statistical_parity(&pairs, &groups, 2).unwrap();
        assert_eq!((m.scored_items, m.skipped_items), (1, 2));
        assert!(matches!(statistical_parity(&pairs[2..], &groups, 2), Err(AuditError::NoScoredItems)));
    }

    #[test]
    fn per_item_csv() {
        let pairs = [pair(0, 0, 4.0, 4.0), pair(1, 0, 3.0, 3.0)];
        let m = statistical_parity(&pairs, &[Some(0), Some(1)], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.csv");
        m.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "item,score,group_0,group_1\n0,1,4,3\n");
    }

    proptest! {
        #[test]
        fn invariant_to_group_relabeling(
            raw in prop::collection::vec((0usize..12, 0usize..4, 1.0f64..5.0, 1.0f64..5.0), 1..60),
            labels in prop::collection::vec(0usize..3, 12),
            perm_seed in 0u64..100,
        ) {
            use rand::seq::SliceRandom;
            let pairs: Vec<ScoredPair> = raw.iter().map(|&(u, v, p, t)| pair(u, v, p, t)).collect();
            for cardinality in [2usize, 3] {
                let groups: Vec<Option<usize>> = labels.iter().map(|&g| Some(g % cardinality)).collect();
                let mut perm: Vec<usize> = (0..cardinality).collect();
                perm.shuffle(&mut crate::nn::rng_from_seed(perm_seed));
                let relabeled: Vec<Option<usize>> = groups.iter().map(|g| g.map(|g| perm[g])).collect();
                for f in [statistical_parity, equal_opportunity] {
                    match (f(&pairs, &groups, cardinality), f(&pairs, &relabeled, cardinality)) {
                        (Ok(a), Ok(b)) => {
                            prop_assert!((a.value - b.value).abs() < 1e-12);
                            prop_assert!(a.value >= 0.0);
                        }
                        (Err(_), Err(_)) => {}
                        _ => prop_assert!(false, "relabeling changed scorability"),
                    }
                }
            }
        }
    }
}
