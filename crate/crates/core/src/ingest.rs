//! Event-log parsing, session fusion, filtering, prefix expansion, and
//! chronological dataset splits.
//!
//! Input is 4-column CSV (`session_id,timestamp,item_id,behavior`); sessions
//! interleave clicks and purchases sorted by timestamp with file order as the
//! tie-break.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Behavior {
    Click,
    Purchase,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Click => "click",
            Behavior::Purchase => "purchase",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorEvent {
    pub session_id: String,
    pub item_id: String,
    pub behavior: Behavior,
    pub ts: i64,
    pub file_order: usize,
}

/// One chronological step of a fused session, with its source timestamp kept
/// so splits and serialization stay faithful to the input log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub item: usize,
    pub behavior: Behavior,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedSession {
    pub id: String,
    pub steps: Vec<Step>,
    /// Rank of the session's first appearance in the input file; used as the
    /// tie-break when two sessions end at the same timestamp.
    pub file_rank: usize,
}

impl FusedSession {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end_ts(&self) -> i64 {
        self.steps.last().map(|s| s.ts).unwrap_or(0)
    }
}

/// Dense item index: ids get indices in order of first appearance when
/// scanning fused sessions session by session, step by step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    pub ids: Vec<String>,
    pub index: HashMap<String, usize>,
    /// Total interaction count per item across all sessions.
    pub counts: Vec<u64>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.index.get(id) {
            ix
        } else {
            let ix = self.ids.len();
            self.ids.push(id.to_string());
            self.index.insert(id.to_string(), ix);
            self.counts.push(0);
            ix
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPrefix {
    pub session_id: String,
    pub input: Vec<(usize, Behavior)>,
    pub target: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SplitPart {
    pub sessions: Vec<FusedSession>,
    pub prefixes: Vec<LabeledPrefix>,
}

/// Chronological train/valid/test split; test holds the most recent sessions.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: SplitPart,
    pub valid: SplitPart,
    pub test: SplitPart,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed event ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown behavior {token:?}")]
    UnknownBehavior { line: usize, token: String },
    #[error("no sessions survive filtering")]
    EmptyDataset,
    #[error("split sizes valid={n_valid} + test={n_test} leave no training sessions out of {n_sessions}")]
    SplitTooLarge {
        n_sessions: usize,
        n_valid: usize,
        n_test: usize,
    },
}

/// Parse `session_id,timestamp,item_id,behavior` lines. A leading header row
/// is skipped; blank lines are ignored; the first bad line aborts the parse.
pub fn parse_events(text: &str) -> Result<Vec<BehaviorEvent>, IngestError> {
    let mut events = Vec::new();
    let mut first_content_line = true;
    for (ix, raw) in text.lines().enumerate() {
        let line_no = ix + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if first_content_line {
            first_content_line = false;
            if fields.first() == Some(&"session_id") {
                continue;
            }
        }
        if fields.len() != 4 {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let (sid, ts_str, item, beh) = (fields[0], fields[1], fields[2], fields[3]);
        if sid.is_empty() || item.is_empty() {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: "empty session or item id".into(),
            });
        }
        let ts: i64 = ts_str.parse().map_err(|_| IngestError::MalformedLine {
            line: line_no,
            reason: format!("bad timestamp {ts_str:?}"),
        })?;
        if ts < 0 {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: format!("negative timestamp {ts}"),
            });
        }
        let behavior = if beh.eq_ignore_ascii_case("click") {
            Behavior::Click
        } else if beh.eq_ignore_ascii_case("purchase") {
            Behavior::Purchase
        } else {
            return Err(IngestError::UnknownBehavior {
                line: line_no,
                token: beh.to_string(),
            });
        };
        events.push(BehaviorEvent {
            session_id: sid.to_string(),
            item_id: item.to_string(),
            behavior,
            ts,
            file_order: events.len(),
        });
    }
    Ok(events)
}

/// Group events by session (sessions ordered by first appearance), sort each
/// group chronologically with file order breaking ties, and build the item
/// catalog in first-appearance order over the fused result.
pub fn fuse_sessions(events: &[BehaviorEvent]) -> (Vec<FusedSession>, Catalog) {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&BehaviorEvent>> = HashMap::new();
    for ev in events {
        groups
            .entry(ev.session_id.as_str())
            .or_insert_with(|| {
                order.push(ev.session_id.as_str());
                Vec::new()
            })
            .push(ev);
    }

    let mut catalog = Catalog::default();
    let mut sessions = Vec::with_capacity(order.len());
    for (rank, sid) in order.iter().enumerate() {
        let mut evs = groups.remove(sid).unwrap();
        evs.sort_by_key(|e| (e.ts, e.file_order));
        let steps = evs
            .iter()
            .map(|e| {
                let item = catalog.intern(&e.item_id);
                catalog.counts[item] += 1;
                Step {
                    item,
                    behavior: e.behavior,
                    ts: e.ts,
                }
            })
            .collect();
        sessions.push(FusedSession {
            id: sid.to_string(),
            steps,
            file_rank: rank,
        });
    }
    (sessions, catalog)
}

/// Drop steps of rare items, then short sessions, re-indexing the catalog over
/// the survivors. `passes` repeats the (items, then sessions) sweep; counts
/// are recomputed from the current survivors at the start of each pass.
pub fn filter_dataset(
    sessions: Vec<FusedSession>,
    catalog: &Catalog,
    min_item_support: u64,
    min_session_len: usize,
    passes: usize,
) -> Result<(Vec<FusedSession>, Catalog), IngestError> {
    let mut current = sessions;
    for _ in 0..passes.max(1) {
        let mut counts = vec![0u64; catalog.len()];
        for s in &current {
            for st in &s.steps {
                counts[st.item] += 1;
            }
        }
        let mut next = Vec::with_capacity(current.len());
        for mut s in current {
            s.steps.retain(|st| counts[st.item] >= min_item_support);
            if s.steps.len() >= min_session_len {
                next.push(s);
            }
        }
        current = next;
    }
    if current.is_empty() {
        return Err(IngestError::EmptyDataset);
    }

    // Re-index to a dense gap-free catalog over surviving steps.
    let mut fresh = Catalog::default();
    for s in &mut current {
        for st in &mut s.steps {
            let ix = fresh.intern(&catalog.ids[st.item]);
            fresh.counts[ix] += 1;
            st.item = ix;
        }
    }
    Ok((current, fresh))
}

/// One labeled prefix per non-initial step: inputs of length 1..l-1, each
/// targeting the item that follows.
pub fn expand_prefixes(session: &FusedSession) -> Vec<LabeledPrefix> {
    let mut out = Vec::new();
    if session.len() < 2 {
        return out;
    }
    for end in 1..session.len() {
        out.push(LabeledPrefix {
            session_id: session.id.clone(),
            input: session.steps[..end]
                .iter()
                .map(|st| (st.item, st.behavior))
                .collect(),
            target: session.steps[end].item,
        });
    }
    out
}

/// Sort sessions by last-event timestamp (file appearance breaks ties); the
/// most recent `n_test` become test, the `n_valid` before them validation.
pub fn split_chronological(
    sessions: Vec<FusedSession>,
    n_valid: usize,
    n_test: usize,
) -> Result<DatasetSplit, IngestError> {
    let n = sessions.len();
    if n_valid + n_test >= n {
        return Err(IngestError::SplitTooLarge {
            n_sessions: n,
            n_valid,
            n_test,
        });
    }
    let mut sorted = sessions;
    sorted.sort_by_key(|s| (s.end_ts(), s.file_rank));
    let test = sorted.split_off(n - n_test);
    let valid = sorted.split_off(n - n_test - n_valid);
    let part = |sess: Vec<FusedSession>| {
        let prefixes = sess.iter().flat_map(expand_prefixes).collect();
        SplitPart {
            sessions: sess,
            prefixes,
        }
    };
    Ok(DatasetSplit {
        train: part(sorted),
        valid: part(valid),
        test: part(test),
    })
}

/// Debug dump: one line per session, `id TAB item:behavior item:behavior ...`.
pub fn dump_sessions(sessions: &[FusedSession], catalog: &Catalog) -> String {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&s.id);
        out.push('\t');
        let toks: Vec<String> = s
            .steps
            .iter()
            .map(|st| format!("{}:{}", catalog.ids[st.item], st.behavior))
            .collect();
        out.push_str(&toks.join(" "));
        out.push('\n');
    }
    out
}

/// Serialize fused sessions back to event CSV; re-parsing and re-fusing the
/// result reproduces the sessions and catalog exactly.
pub fn sessions_to_events_csv(sessions: &[FusedSession], catalog: &Catalog) -> String {
    let mut out = String::from("session_id,timestamp,item_id,behavior\n");
    for s in sessions {
        for st in &s.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.id, st.ts, catalog.ids[st.item], st.behavior
            ));
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    train: Vec<String>,
    valid: Vec<String>,
    test: Vec<String>,
}

/// JSON manifest listing session ids per split.
pub fn split_manifest_json(split: &DatasetSplit) -> String {
    let ids = |p: &SplitPart| p.sessions.iter().map(|s| s.id.clone()).collect();
    let m = SplitManifest {
        train: ids(&split.train),
        valid: ids(&split.valid),
        test: ids(&split.test),
    };
    serde_json::to_string_pretty(&m).expect("manifest serialization cannot fail")
}
