//! Per-batch sampling of loss-term partners.

use std::collections::BTreeSet;

use rand::Rng;

use crate::graphs::RelationGraph;
use crate::ingest::LabeledPrefix;
use crate::train::losses::RelationSample;

/// How many uniform draws to attempt per irrelevant slot before giving up on
/// an anchor whose relation neighborhoods cover almost the whole catalog.
const REJECTION_ATTEMPTS: usize = 64;

/// Sorted deduplicated item ids appearing in the batch (inputs and targets).
pub fn batch_items<P: std::borrow::Borrow<LabeledPrefix>>(prefixes: &[P]) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for p in prefixes {
        let p = p.borrow();
        for &(item, _) in &p.input {
            set.insert(item);
        }
        set.insert(p.target);
    }
    set.into_iter().collect()
}

/// One pair per anchor: the partner is drawn uniformly from the other batch
/// items. Returns no pairs when the batch holds fewer than two distinct items.
pub fn sample_exclusive_pairs<R: Rng>(items: &[usize], rng: &mut R) -> Vec<(usize, usize)> {
    if items.len() < 2 {
        return Vec::new();
    }
    let mut pairs = Vec::with_capacity(items.len());
    for (pos, &i) in items.iter().enumerate() {
        let mut other = rng.random_range(0..items.len() - 1);
        if other >= pos {
            other += 1;
        }
        pairs.push((i, items[other]));
    }
    pairs
}

/// One relation sample per batch anchor that has a complementary neighbor.
/// The substitute is drawn from the anchor's substitutable neighbors minus the
/// chosen complement; irrelevant items are drawn uniformly from the catalog
/// with rejection against both neighborhoods.
pub fn sample_relation_triples<R: Rng>(
    items: &[usize],
    sub: &RelationGraph,
    comp: &RelationGraph,
    n_items: usize,
    n_neg: usize,
    rng: &mut R,
) -> Vec<RelationSample> {
    let mut samples = Vec::new();
    for &i in items {
        let comp_nbrs = comp.neighbors(i);
        if comp_nbrs.is_empty() {
            continue;
        }
        let k = comp_nbrs[rng.random_range(0..comp_nbrs.len())];

        let sub_nbrs = sub.neighbors(i);
        let sub_pool: Vec<usize> = sub_nbrs.iter().copied().filter(|&j| j != k).collect();
        let substitute = if sub_pool.is_empty() {
            None
        } else {
            Some(sub_pool[rng.random_range(0..sub_pool.len())])
        };

        let mut irrelevant = Vec::with_capacity(n_neg);
        for _ in 0..n_neg {
            for _ in 0..REJECTION_ATTEMPTS {
                let t = rng.random_range(0..n_items);
                if t != i
                    && sub_nbrs.binary_search(&t).is_err()
                    && comp_nbrs.binary_search(&t).is_err()
                {
                    irrelevant.push(t);
                    break;
                }
            }
        }

        if substitute.is_some() || !irrelevant.is_empty() {
            samples.push(RelationSample {
                anchor: i,
                substitute,
                complement: k,
                irrelevant,
            });
        }
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{EdgeData, RelationGraph, RelationKind};
    use crate::ingest::Behavior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(kind: RelationKind, n: usize, edges: &[(usize, usize)]) -> RelationGraph {
        let map = edges
            .iter()
            .map(|&(a, b)| {
                (
                    (a.min(b), a.max(b)),
                    EdgeData {
                        frequency: 1,
                        weight: 1.0,
                        order: 1,
                    },
                )
            })
            .collect();
        RelationGraph::from_edges(kind, n, map)
    }

    fn prefix(items: &[usize], target: usize) -> LabeledPrefix {
        LabeledPrefix {
            session_id: "s".into(),
            input: items.iter().map(|&i| (i, Behavior::Click)).collect(),
            target,
        }
    }

    #[test]
    fn batch_items_dedup_sorted_with_targets() {
        let batch = vec![prefix(&[3, 1, 3], 5), prefix(&[1], 0)];
        assert_eq!(batch_items(&batch), vec![0, 1, 3, 5]);
    }

    #[test]
    fn exclusive_pairs_avoid_self_and_stay_in_batch() {
        let items = vec![2, 5, 9, 11];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pairs = sample_exclusive_pairs(&items, &mut rng);
            assert_eq!(pairs.len(), 4);
            for (i, j) in pairs {
                assert_ne!(i, j);
                assert!(items.contains(&i) && items.contains(&j));
            }
        }
        assert!(sample_exclusive_pairs(&[7], &mut rng).is_empty());
        assert!(sample_exclusive_pairs(&[], &mut rng).is_empty());
    }

    #[test]
    fn exclusive_partner_choice_is_roughly_uniform() {
        let items = vec![0, 1, 2, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        for _ in 0..6000 {
            let pairs = sample_exclusive_pairs(&items, &mut rng);
            counts[pairs[0].1] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            let frac = c as f64 / 6000.0;
            assert!((frac - 1.0 / 3.0).abs() < 0.03, "frac {frac}");
        }
    }

    #[test]
    fn relation_samples_respect_memberships() {
        let n = 10;
        let sub = graph(RelationKind::Substitutable, n, &[(0, 1), (0, 2), (4, 5)]);
        let comp = graph(RelationKind::Complementary, n, &[(0, 3), (0, 2), (6, 7)]);
        let items = vec![0, 4, 6, 9];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let samples = sample_relation_triples(&items, &sub, &comp, n, 2, &mut rng);
            for s in &samples {
                assert!(comp.neighbors(s.anchor).contains(&s.complement));
                if let Some(j) = s.substitute {
                    assert!(sub.neighbors(s.anchor).contains(&j));
                    assert_ne!(j, s.complement);
                }
                for &t in &s.irrelevant {
                    assert_ne!(t, s.anchor);
                    assert!(!sub.neighbors(s.anchor).contains(&t));
                    assert!(!comp.neighbors(s.anchor).contains(&t));
                }
            }
            // anchor 4 has substitutes but no complements → never sampled;
            // anchor 9 has no relations at all → never sampled.
            assert!(samples.iter().all(|s| s.anchor == 0 || s.anchor == 6));
            // anchor 6 has no substitute pool → None, but negatives keep it in.
            let s6 = samples.iter().find(|s| s.anchor == 6).unwrap();
            assert_eq!(s6.substitute, None);
            assert!(!s6.irrelevant.is_empty());
        }
    }

    #[test]
    fn substitute_pool_excludes_chosen_complement() {
        // item 2 is both a substitute and a complement of 0; with no other
        // substitute available the sample must fall back to None whenever the
        // complement draw picks 2.
        let n = 4;
        let sub = graph(RelationKind::Substitutable, n, &[(0, 2)]);
        let comp = graph(RelationKind::Complementary, n, &[(0, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = sample_relation_triples(&[0], &sub, &comp, n, 1, &mut rng);
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].complement, 2);
        assert_eq!(samples[0].substitute, None);
    }

    #[test]
    fn saturated_catalog_yields_no_negatives() {
        // every non-anchor item is related → rejection can never succeed
        let n = 3;
        let sub = graph(RelationKind::Substitutable, n, &[(0, 1)]);
        let comp = graph(RelationKind::Complementary, n, &[(0, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = sample_relation_triples(&[0], &sub, &comp, n, 3, &mut rng);
        assert_eq!(samples.len(), 1);
        assert!(samples[0].irrelevant.is_empty());
        assert_eq!(samples[0].substitute, Some(1));
    }
}
