//! Synthetic corpus generator with planted relation structure.
//!
//! Items are partitioned into substitute clusters; a fixed set of disjoint
//! cross-cluster pairs is planted as complements. Sessions are seeded walks:
//! a few clicks inside a cluster, a purchase, then (with fixed probability)
//! a click or purchase of the purchased item's planted complement, hopping
//! the walk into the partner's cluster. Uniform noise events are injected at
//! a configurable rate. With zero noise, every adjacent event pair realizes
//! a planted relation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::Behavior;

/// Chance that a purchase with a planted partner is followed by the partner.
const P_FOLLOW: f64 = 0.5;
/// Chance the follow-up is a click (walk continues) rather than a purchase
/// (walk ends; continuing after it would fabricate unplanted complements).
const P_FOLLOW_CLICK: f64 = 0.7;
/// Clicks per cluster visit, inclusive range.
const CLICKS_PER_BLOCK: (usize, usize) = (2, 3);
/// Noise behavior split: clicks dominate, as in real traffic.
const P_NOISE_CLICK: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_sub_clusters: usize,
    pub n_comp_pairs: usize,
    pub n_sessions: usize,
    /// Inclusive target range for events per session; a walk that dead-ends
    /// (purchase without a partner follow-up) may stop short.
    pub len_range: (usize, usize),
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 200,
            n_sub_clusters: 40,
            n_comp_pairs: 60,
            n_sessions: 3000,
            len_range: (8, 16),
            noise_rate: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth knob: {0}")]
    InvalidKnob(String),
}

/// Generated corpus plus the planted structure it was built from.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Full events file, header included, parseable by the ingest module.
    pub events_csv: String,
    /// All within-cluster item pairs (i < j), by generator item index.
    pub truth_sub: BTreeSet<(usize, usize)>,
    /// Planted complement pairs (i < j).
    pub truth_comp: BTreeSet<(usize, usize)>,
    /// Complement pairs actually emitted as purchase→follow-up at least once.
    pub realized_comp: BTreeSet<(usize, usize)>,
    pub n_noise_events: usize,
    pub n_events: usize,
}

pub fn item_name(idx: usize) -> String {
    format!("i{idx}")
}

pub fn session_name(idx: usize) -> String {
    format!("s{idx:05}")
}

/// Cluster layout: contiguous blocks, the first `n_items % n_clusters` of
/// them one item larger.
fn cluster_bounds(cfg: &SynthConfig, cluster: usize) -> (usize, usize) {
    let base = cfg.n_items / cfg.n_sub_clusters;
    let extra = cfg.n_items % cfg.n_sub_clusters;
    let start = if cluster < extra {
        cluster * (base + 1)
    } else {
        extra * (base + 1) + (cluster - extra) * base
    };
    let size = if cluster < extra { base + 1 } else { base };
    (start, start + size)
}

fn cluster_of(cfg: &SynthConfig, item: usize) -> usize {
    let base = cfg.n_items / cfg.n_sub_clusters;
    let extra = cfg.n_items % cfg.n_sub_clusters;
    let big_span = extra * (base + 1);
    if item < big_span {
        item / (base + 1)
    } else {
        extra + (item - big_span) / base
    }
}

/// Deterministic disjoint cross-cluster pairs: round r pairs slot 2r of each
/// cluster with slot 2r+1 of the next cluster, until enough pairs exist.
fn plant_comp_pairs(cfg: &SynthConfig) -> Result<Vec<(usize, usize)>, SynthError> {
    let k = cfg.n_sub_clusters;
    let min_size = cluster_bounds(cfg, k - 1).1 - cluster_bounds(cfg, k - 1).0;
    let rounds = cfg.n_comp_pairs.div_ceil(k);
    if 2 * rounds > min_size {
        return Err(SynthError::InvalidKnob(format!(
            "{} complement pairs need {} reserved slots per cluster but the smallest cluster has {min_size} items",
            cfg.n_comp_pairs,
            2 * rounds
        )));
    }
    let mut pairs = Vec::with_capacity(cfg.n_comp_pairs);
    'outer: for r in 0..rounds {
        for c in 0..k {
            if pairs.len() == cfg.n_comp_pairs {
                break 'outer;
            }
            let a = cluster_bounds(cfg, c).0 + 2 * r;
            let b = cluster_bounds(cfg, (c + 1) % k).0 + 2 * r + 1;
            pairs.push((a.min(b), a.max(b)));
        }
    }
    Ok(pairs)
}

fn validate(cfg: &SynthConfig) -> Result<(), SynthError> {
    if cfg.n_items == 0 || cfg.n_sessions == 0 {
        return Err(SynthError::InvalidKnob("n_items and n_sessions must be positive".into()));
    }
    if cfg.n_sub_clusters < 2 || cfg.n_sub_clusters > cfg.n_items {
        return Err(SynthError::InvalidKnob(
            "n_sub_clusters must be in [2, n_items]".into(),
        ));
    }
    if cfg.len_range.0 < 3 || cfg.len_range.0 > cfg.len_range.1 {
        return Err(SynthError::InvalidKnob(
            "len_range must satisfy 3 <= min <= max".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.noise_rate) {
        return Err(SynthError::InvalidKnob("noise_rate must be in [0, 1)".into()));
    }
    Ok(())
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    validate(cfg)?;
    let pairs = plant_comp_pairs(cfg)?;
    let mut partner: Vec<Option<usize>> = vec![None; cfg.n_items];
    for &(a, b) in &pairs {
        partner[a] = Some(b);
        partner[b] = Some(a);
    }

    let mut truth_sub = BTreeSet::new();
    for c in 0..cfg.n_sub_clusters {
        let (lo, hi) = cluster_bounds(cfg, c);
        for i in lo..hi {
            for j in (i + 1)..hi {
                truth_sub.insert((i, j));
            }
        }
    }
    let truth_comp: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = String::from("session_id,timestamp,item_id,behavior\n");
    let mut realized_comp = BTreeSet::new();
    let mut n_noise_events = 0usize;
    let mut n_events = 0usize;

    for s_idx in 0..cfg.n_sessions {
        let sid = session_name(s_idx);
        let target_len = rng.random_range(cfg.len_range.0..=cfg.len_range.1);
        let mut cluster = rng.random_range(0..cfg.n_sub_clusters);
        let mut pos: usize = 0;

        let emit = |item: usize, behavior: Behavior, pos: &mut usize, csv: &mut String| {
            let ts = s_idx as i64 * 10_000 + *pos as i64;
            writeln!(csv, "{sid},{ts},{},{}", item_name(item), behavior.as_str())
                .expect("writing to string");
            *pos += 1;
        };
        let maybe_noise =
            |rng: &mut ChaCha8Rng, pos: &mut usize, csv: &mut String, noise: &mut usize| {
                if rng.random::<f64>() < cfg.noise_rate {
                    let item = rng.random_range(0..cfg.n_items);
                    let behavior = if rng.random::<f64>() < P_NOISE_CLICK {
                        Behavior::Click
                    } else {
                        Behavior::Purchase
                    };
                    let ts = s_idx as i64 * 10_000 + *pos as i64;
                    writeln!(csv, "{sid},{ts},{},{}", item_name(item), behavior.as_str())
                        .expect("writing to string");
                    *pos += 1;
                    *noise += 1;
                }
            };

        loop {
            let (lo, hi) = cluster_bounds(cfg, cluster);
            let n_clicks = rng.random_range(CLICKS_PER_BLOCK.0..=CLICKS_PER_BLOCK.1);
            for _ in 0..n_clicks {
                let item = rng.random_range(lo..hi);
                emit(item, Behavior::Click, &mut pos, &mut csv);
                maybe_noise(&mut rng, &mut pos, &mut csv, &mut n_noise_events);
            }
            let bought = rng.random_range(lo..hi);
            emit(bought, Behavior::Purchase, &mut pos, &mut csv);
            maybe_noise(&mut rng, &mut pos, &mut csv, &mut n_noise_events);

            if pos >= target_len {
                break;
            }
            let Some(q) = partner[bought] else { break };
            if rng.random::<f64>() >= P_FOLLOW {
                break;
            }
            realized_comp.insert((bought.min(q), bought.max(q)));
            if rng.random::<f64>() < P_FOLLOW_CLICK {
                emit(q, Behavior::Click, &mut pos, &mut csv);
                maybe_noise(&mut rng, &mut pos, &mut csv, &mut n_noise_events);
                cluster = cluster_of(cfg, q);
            } else {
                // buying the complement ends the walk: any further same-cluster
                // event after a purchase would fabricate an unplanted relation
                emit(q, Behavior::Purchase, &mut pos, &mut csv);
                break;
            }
        }
        n_events += pos;
    }

    Ok(SynthCorpus {
        events_csv: csv,
        truth_sub,
        truth_comp,
        realized_comp,
        n_noise_events,
        n_events,
    })
}
