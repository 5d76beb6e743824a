//! Undirected substitutable/complementary item graphs built from behavior
//! transitions in fused sessions.
//!
//! Adjacent step pairs vote for exactly one graph: click→click and
//! click→purchase are substitutable evidence; purchase→purchase and
//! purchase→click are complementary evidence. Second-order complements are
//! then inferred through substitutable bridges in a single pass.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ingest::{Behavior, FusedSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Substitutable,
    Complementary,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Substitutable => "substitutable",
            RelationKind::Complementary => "complementary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeData {
    pub frequency: u64,
    /// Frequency normalized by the graph's max frequency, in (0, 1].
    pub weight: f64,
    /// 1 = observed transition, 2 = inferred through a substitutable bridge.
    pub order: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub kind: RelationKind,
    pub num_items: usize,
    /// Keyed by (min, max) so each undirected edge is stored once; BTreeMap
    /// keeps every iteration (dumps, stats, augmentation) deterministic.
    pub edges: BTreeMap<(usize, usize), EdgeData>,
    /// Sorted neighbor lists, consistent with `edges`.
    pub adjacency: Vec<Vec<usize>>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl RelationGraph {
    /// Build a graph directly from an edge map keyed by (min, max) pairs.
    pub fn from_edges(
        kind: RelationKind,
        num_items: usize,
        edges: BTreeMap<(usize, usize), EdgeData>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); num_items];
        for &(i, j) in edges.keys() {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        RelationGraph {
            kind,
            num_items,
            edges,
            adjacency,
        }
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&EdgeData> {
        self.edges.get(&key(i, j))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edge(i, j).map(|e| e.weight)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

fn build_first_order(
    kind: RelationKind,
    sessions: &[FusedSession],
    num_items: usize,
) -> RelationGraph {
    let mut freq: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for s in sessions {
        for pair in s.steps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.item == b.item {
                continue;
            }
            let fires = match kind {
                RelationKind::Substitutable => {
                    a.behavior == Behavior::Click
                        && (b.behavior == Behavior::Click || b.behavior == Behavior::Purchase)
                }
                RelationKind::Complementary => {
                    a.behavior == Behavior::Purchase
                        && (b.behavior == Behavior::Purchase || b.behavior == Behavior::Click)
                }
            };
            if fires {
                *freq.entry(key(a.item, b.item)).or_insert(0) += 1;
            }
        }
    }
    let max = freq.values().copied().max().unwrap_or(1);
    let edges = freq
        .into_iter()
        .map(|(k, f)| {
            (
                k,
                EdgeData {
                    frequency: f,
                    weight: f as f64 / max as f64,
                    order: 1,
                },
            )
        })
        .collect();
    RelationGraph::from_edges(kind, num_items, edges)
}

/// Substitutable graph: click→click or click→purchase transitions.
pub fn build_substitutable(sessions: &[FusedSession], num_items: usize) -> RelationGraph {
    build_first_order(RelationKind::Substitutable, sessions, num_items)
}

/// First-order complementary graph: purchase→purchase or purchase→click.
pub fn build_complementary_first_order(
    sessions: &[FusedSession],
    num_items: usize,
) -> RelationGraph {
    build_first_order(RelationKind::Complementary, sessions, num_items)
}

/// Add second-order complement edges: for each first-order complement {i,k}
/// and substitutable bridge {k,j}, derive {i,j}. Derived weight is
/// min(w_comp, w_sub), maxed over derivation paths; frequency counts the
/// paths. Pairs already complementary first-order are left untouched, and no
/// renormalization is applied afterward.
pub fn augment_second_order(comp: &RelationGraph, sub: &RelationGraph) -> RelationGraph {
    assert_eq!(comp.num_items, sub.num_items, "graphs share one catalog");
    let mut derived: BTreeMap<(usize, usize), (u64, f64)> = BTreeMap::new();
    for (&(a, b), e) in &comp.edges {
        if e.order != 1 {
            continue;
        }
        // Bridge at either endpoint: comp{i,k} + sub{k,j} → derived {i,j}.
        for &(i, k) in &[(a, b), (b, a)] {
            for &j in sub.neighbors(k) {
                if j == i || comp.edges.contains_key(&key(i, j)) {
                    continue;
                }
                let w = e.weight.min(sub.weight(k, j).unwrap());
                let entry = derived.entry(key(i, j)).or_insert((0, 0.0));
                entry.0 += 1;
                entry.1 = entry.1.max(w);
            }
        }
    }
    let mut edges = comp.edges.clone();
    for (k, (paths, w)) in derived {
        edges.insert(
            k,
            EdgeData {
                frequency: paths,
                weight: w,
                order: 2,
            },
        );
    }
    RelationGraph::from_edges(comp.kind, comp.num_items, edges)
}

/// Union of two graphs over one catalog, for the merged-graph model variant:
/// frequencies add, weight is the max of the sides, order the min.
pub fn merge_union(a: &RelationGraph, b: &RelationGraph) -> RelationGraph {
    assert_eq!(a.num_items, b.num_items, "graphs share one catalog");
    let mut edges = a.edges.clone();
    for (&k, eb) in &b.edges {
        edges
            .entry(k)
            .and_modify(|ea| {
                ea.frequency += eb.frequency;
                ea.weight = ea.weight.max(eb.weight);
                ea.order = ea.order.min(eb.order);
            })
            .or_insert(*eb);
    }
    RelationGraph::from_edges(a.kind, a.num_items, edges)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GraphStats {
    pub num_edges: usize,
    pub density: f64,
    pub mean_degree: f64,
    /// Counts over ten equal weight bins covering (0, 1].
    pub weight_histogram: [u64; 10],
}

pub fn graph_stats(g: &RelationGraph) -> GraphStats {
    let n = g.num_items;
    let e = g.num_edges();
    let possible = n.saturating_sub(1) * n / 2;
    let mut hist = [0u64; 10];
    for edge in g.edges.values() {
        let bin = ((edge.weight * 10.0).ceil() as usize).clamp(1, 10) - 1;
        hist[bin] += 1;
    }
    GraphStats {
        num_edges: e,
        density: if possible == 0 {
            0.0
        } else {
            e as f64 / possible as f64
        },
        mean_degree: if n == 0 { 0.0 } else { 2.0 * e as f64 / n as f64 },
        weight_histogram: hist,
    }
}

/// TSV dump, one row per edge ordered by (item_i, item_j):
/// `kind  item_i  item_j  frequency  weight  order`.
pub fn to_tsv(g: &RelationGraph) -> String {
    let mut out = String::from("kind\titem_i\titem_j\tfrequency\tweight\torder\n");
    for (&(i, j), e) in &g.edges {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            g.kind.as_str(),
            i,
            j,
            e.frequency,
            e.weight,
            e.order
        ));
    }
    out
}
