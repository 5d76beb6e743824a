//! Ranked-retrieval metrics, baseline scorers, and the evaluation loop.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Behavior, FusedSession, LabeledPrefix};
use crate::model::denoise::DenoiseMode;
use crate::model::forward::{item_pipeline, predict_scores, session_forward, PreparedGraphs};
use crate::model::ModelParams;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation split has no prefixes")]
    EmptySplit,
}

/// Anything that maps a session prefix to one score per catalog item.
pub trait Scorer {
    fn score(&self, prefix: &[(usize, Behavior)]) -> Array1<f64>;
    fn name(&self) -> &str;
}

/// 1-based rank of `target` by descending score; ties go to the lower index.
pub fn rank_target(scores: &Array1<f64>, target: usize) -> usize {
    let st = scores[target];
    let mut rank = 1;
    for (j, &s) in scores.iter().enumerate() {
        if s > st || (s == st && j < target) {
            rank += 1;
        }
    }
    rank
}

/// (hr, mrr, ndcg) for a single prefix whose target landed at `rank`. With one
/// binary-relevant target the ideal DCG is 1, so ndcg reduces to the discount.
pub fn metrics_at_k(rank: usize, k: usize) -> (f64, f64, f64) {
    if rank > k {
        return (0.0, 0.0, 0.0);
    }
    let r = rank as f64;
    (1.0, 1.0 / r, 1.0 / (r + 1.0).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub hr: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub per_k: BTreeMap<usize, MetricCell>,
    pub n_prefixes: usize,
}

/// Full evaluation report as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    #[serde(rename = "K")]
    pub per_k: BTreeMap<usize, MetricCell>,
    pub n_prefixes: usize,
    pub seed: u64,
}

/// Mean HR/MRR/NDCG over all prefixes at each cutoff.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    prefixes: &[LabeledPrefix],
    ks: &[usize],
) -> Result<MetricTable, EvalError> {
    if prefixes.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let mut sums: BTreeMap<usize, (f64, f64, f64)> = ks.iter().map(|&k| (k, (0.0, 0.0, 0.0))).collect();
    for p in prefixes {
        let scores = scorer.score(&p.input);
        let rank = rank_target(&scores, p.target);
        for (&k, acc) in sums.iter_mut() {
            let (hr, mrr, ndcg) = metrics_at_k(rank, k);
            acc.0 += hr;
            acc.1 += mrr;
            acc.2 += ndcg;
        }
    }
    let n = prefixes.len() as f64;
    let per_k = sums
        .into_iter()
        .map(|(k, (hr, mrr, ndcg))| {
            (
                k,
                MetricCell {
                    hr: hr / n,
                    mrr: mrr / n,
                    ndcg: ndcg / n,
                },
            )
        })
        .collect();
    Ok(MetricTable {
        per_k,
        n_prefixes: prefixes.len(),
    })
}

/// Recommends by global frequency: one static score per item, counted over
/// training prefix inputs and targets.
pub struct PopScorer {
    counts: Array1<f64>,
}

impl PopScorer {
    pub fn from_train(prefixes: &[LabeledPrefix], n_items: usize) -> Self {
        let mut counts = Array1::zeros(n_items);
        for p in prefixes {
            for &(item, _) in &p.input {
                counts[item] += 1.0;
            }
            counts[p.target] += 1.0;
        }
        PopScorer { counts }
    }
}

impl Scorer for PopScorer {
    fn score(&self, _prefix: &[(usize, Behavior)]) -> Array1<f64> {
        self.counts.clone()
    }

    fn name(&self) -> &str {
        "pop"
    }
}

/// Cosine similarity between items over binary session-incidence vectors;
/// a prefix is scored by the similarity row of its last item. Self-similarity
/// is zeroed so an item never recommends itself.
pub struct ItemKnnScorer {
    sim: Array2<f64>,
}

impl ItemKnnScorer {
    pub fn from_train(sessions: &[FusedSession], n_items: usize) -> Self {
        let mut member: Vec<Vec<usize>> = vec![Vec::new(); n_items]; // sessions per item
        for (sid, sess) in sessions.iter().enumerate() {
            let mut items: Vec<usize> = sess.steps.iter().map(|s| s.item).collect();
            items.sort_unstable();
            items.dedup();
            for item in items {
                member[item].push(sid);
            }
        }
        let mut sim = Array2::zeros((n_items, n_items));
        for i in 0..n_items {
            if member[i].is_empty() {
                continue;
            }
            for j in (i + 1)..n_items {
                if member[j].is_empty() {
                    continue;
                }
                let overlap = intersection_size(&member[i], &member[j]);
                if overlap > 0 {
                    let s = overlap as f64 / ((member[i].len() * member[j].len()) as f64).sqrt();
                    sim[[i, j]] = s;
                    sim[[j, i]] = s;
                }
            }
        }
        ItemKnnScorer { sim }
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut ia, mut ib, mut n) = (0, 0, 0);
    while ia < a.len() && ib < b.len() {
        match a[ia].cmp(&b[ib]) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                ia += 1;
                ib += 1;
            }
        }
    }
    n
}

impl Scorer for ItemKnnScorer {
    fn score(&self, prefix: &[(usize, Behavior)]) -> Array1<f64> {
        let last = prefix.last().expect("prefix is non-empty").0;
        self.sim.row(last).to_owned()
    }

    fn name(&self) -> &str {
        "itemknn"
    }
}

/// Scores with the trained model: item embeddings are computed once in
/// deterministic denoising mode, then each prefix runs the session module.
pub struct ModelScorer<'a> {
    params: &'a ModelParams,
    x: Array2<f64>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        params: &'a ModelParams,
        graphs: &PreparedGraphs,
        k_zeta: usize,
        tau: f64,
    ) -> Self {
        // deterministic mode never draws from the rng
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let pipe = item_pipeline(
            params,
            graphs,
            k_zeta,
            tau,
            DenoiseMode::Deterministic,
            &mut rng,
            None,
        );
        ModelScorer { params, x: pipe.x }
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, prefix: &[(usize, Behavior)]) -> Array1<f64> {
        let items: Vec<usize> = prefix.iter().map(|&(i, _)| i).collect();
        let sess = session_forward(&self.x, &items, self.params);
        predict_scores(&sess.s, &self.x).0
    }

    fn name(&self) -> &str {
        "scrm"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Step;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn prefix(items: &[usize], target: usize) -> LabeledPrefix {
        LabeledPrefix {
            session_id: "s".into(),
            input: items.iter().map(|&i| (i, Behavior::Click)).collect(),
            target,
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_target(&array![0.1, 0.9, 0.2], 1), 1);
        // tied with one lower-index item
        assert_eq!(rank_target(&array![0.5, 0.5, 0.1], 1), 2);
        assert_eq!(rank_target(&array![0.1, 0.3, 0.2], 2), 2);
        // lower index wins the tie when it IS the target
        assert_eq!(rank_target(&array![0.5, 0.5, 0.1], 0), 1);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(metrics_at_k(1, 5), (1.0, 1.0, 1.0));
        let (hr, mrr, ndcg) = metrics_at_k(3, 5);
        assert_eq!(hr, 1.0);
        assert_abs_diff_eq!(mrr, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ndcg, 0.5, epsilon = 1e-12);
        assert_eq!(metrics_at_k(7, 5), (0.0, 0.0, 0.0));
        // boundary: rank == K still counts
        assert_eq!(metrics_at_k(5, 5).0, 1.0);
    }

    struct Oracle(Vec<f64>);
    impl Scorer for Oracle {
        fn score(&self, _p: &[(usize, Behavior)]) -> Array1<f64> {
            Array1::from(self.0.clone())
        }
        fn name(&self) -> &str {
            "oracle"
        }
    }

    #[test]
    fn evaluate_always_first_gives_ones_and_misses_average() {
        // target 1 has the top score; target 3 misses entirely at K=2
        let scorer = Oracle(vec![0.0, 1.0, 0.5, 0.1]);
        let t = evaluate(&scorer, &[prefix(&[0], 1)], &[5, 10]).unwrap();
        for cell in t.per_k.values() {
            assert_eq!((cell.hr, cell.mrr, cell.ndcg), (1.0, 1.0, 1.0));
        }
        let t = evaluate(&scorer, &[prefix(&[0], 1), prefix(&[0], 3)], &[10]).unwrap();
        let c = &t.per_k[&10];
        // ranks 1 and 3 at K=10: averages of (1,1,1) and (1,1/3,0.5)
        assert_abs_diff_eq!(c.hr, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mrr, (1.0 + 1.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ndcg, 0.75, epsilon = 1e-12);
        let t = evaluate(&scorer, &[prefix(&[0], 1), prefix(&[0], 3)], &[2]).unwrap();
        let c = &t.per_k[&2];
        assert_abs_diff_eq!(c.hr, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mrr, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ndcg, 0.5, epsilon = 1e-12);
        assert_eq!(t.n_prefixes, 2);
    }

    #[test]
    fn evaluate_rejects_empty_split() {
        let scorer = Oracle(vec![1.0]);
        assert!(matches!(
            evaluate(&scorer, &[], &[10]),
            Err(EvalError::EmptySplit)
        ));
    }

    struct RandomScorer {
        n: usize,
        rng: std::cell::RefCell<ChaCha8Rng>,
    }
    impl Scorer for RandomScorer {
        fn score(&self, _p: &[(usize, Behavior)]) -> Array1<f64> {
            let mut rng = self.rng.borrow_mut();
            Array1::from_iter((0..self.n).map(|_| rng.random::<f64>()))
        }
        fn name(&self) -> &str {
            "random"
        }
    }

    #[test]
    fn uniform_random_scorer_hits_at_k_over_n() {
        use rand::SeedableRng;
        let scorer = RandomScorer {
            n: 100,
            rng: std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(0)),
        };
        let prefixes: Vec<LabeledPrefix> = (0..4000).map(|i| prefix(&[0], i % 100)).collect();
        let t = evaluate(&scorer, &prefixes, &[10]).unwrap();
        assert_abs_diff_eq!(t.per_k[&10].hr, 0.1, epsilon = 0.02);
    }

    #[test]
    fn metric_invariants_on_random_ranks() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let rank = rng.random_range(1..=30usize);
            let mut prev = (0.0, 0.0, 0.0);
            for k in [5, 10, 20] {
                let (hr, mrr, ndcg) = metrics_at_k(rank, k);
                for v in [hr, mrr, ndcg] {
                    assert!((0.0..=1.0).contains(&v));
                }
                assert!(mrr <= hr && ndcg <= hr);
                // monotone in K
                assert!(hr >= prev.0 && mrr >= prev.1 && ndcg >= prev.2);
                prev = (hr, mrr, ndcg);
            }
        }
    }

    #[test]
    fn brute_force_rank_oracle_small_catalogs() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let n = rng.random_range(1..=8usize);
            // coarse grid makes ties common
            let scores =
                Array1::from_iter((0..n).map(|_| (rng.random_range(0..4) as f64) * 0.25));
            let target = rng.random_range(0..n);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let expect = order.iter().position(|&j| j == target).unwrap() + 1;
            assert_eq!(rank_target(&scores, target), expect);
        }
    }

    #[test]
    fn pop_counts_inputs_and_targets_with_index_ties() {
        let train = vec![
            prefix(&[0, 0, 1], 0),
            prefix(&[0, 2], 0),
            prefix(&[1, 2], 3),
            prefix(&[0], 1),
        ];
        let pop = PopScorer::from_train(&train, 5);
        let scores = pop.score(&[(4, Behavior::Click)]);
        // counts: item0 = 6, item1 = 3, item2 = 2, item3 = 1, item4 = 0
        assert_eq!(scores, array![6.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(rank_target(&scores, 0), 1);
        // tie on counts → lower index first
        let tied = PopScorer::from_train(&[prefix(&[0], 1), prefix(&[1], 0)], 3);
        let s = tied.score(&[]);
        assert_eq!(rank_target(&s, 0), 1);
        assert_eq!(rank_target(&s, 1), 2);
    }

    fn session(id: &str, items: &[usize]) -> FusedSession {
        FusedSession {
            id: id.into(),
            steps: items
                .iter()
                .enumerate()
                .map(|(t, &item)| Step {
                    item,
                    behavior: Behavior::Click,
                    ts: t as i64,
                })
                .collect(),
            file_rank: 0,
        }
    }

    #[test]
    fn itemknn_cosine_over_session_incidence() {
        // item 0 in sessions {0,1}, item 1 in {1,2}, item 2 in {0,1}, item 3 nowhere
        let sessions = vec![
            session("a", &[0, 2]),
            session("b", &[0, 1, 2]),
            session("c", &[1]),
        ];
        let knn = ItemKnnScorer::from_train(&sessions, 4);
        let s0 = knn.score(&[(0, Behavior::Click)]);
        assert_abs_diff_eq!(s0[1], 0.5, epsilon = 1e-12); // overlap 1 / √(2·2)
        assert_abs_diff_eq!(s0[2], 1.0, epsilon = 1e-12); // identical incidence
        assert_eq!(s0[3], 0.0); // never co-occurs
        assert_eq!(s0[0], 0.0); // self excluded
        // repeated items in one session count once
        let rep = ItemKnnScorer::from_train(&[session("d", &[0, 0, 1])], 2);
        assert_abs_diff_eq!(rep.score(&[(0, Behavior::Click)])[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn report_serializes_with_expected_keys() {
        let mut per_k = BTreeMap::new();
        per_k.insert(
            10,
            MetricCell {
                hr: 0.5,
                mrr: 0.25,
                ndcg: 0.3,
            },
        );
        let report = MetricReport {
            model: "scrm".into(),
            dataset: "toy".into(),
            per_k,
            n_prefixes: 7,
            seed: 42,
        };
        let json = serde_json::to_string(&report).unwrap();
        for key in ["\"model\"", "\"dataset\"", "\"K\"", "\"10\"", "\"hr\"", "\"mrr\"", "\"ndcg\"", "\"n_prefixes\"", "\"seed\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.per_k[&10], MetricCell { hr: 0.5, mrr: 0.25, ndcg: 0.3 });
    }
}
