//! Global event traces and the checks run over them.
//!
//! A history is the serialisation order of every read and commit attempt the
//! registry processed. Two properties are decided from it:
//!
//! * legality: per-shard writes are serialised (each accepted write builds on
//!   the version immediately before it, and accepted versions strictly
//!   increase), and no accepted commit carries a sibling read that another
//!   accepted commit superseded between the read and the commit;
//! * structural races: two agents read a shard at the same version and both
//!   attempt a commit expecting it, the second without re-reading after the
//!   first one landed.
//!
//! Synthetic agents only read through the registry, so the read-sets in these
//! histories are complete; the checks say nothing about reads an agent made
//! through other channels.

pub mod explore;
pub mod format;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Get,
    CommitOk,
    CommitReject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub agent: String,
    pub key: String,
    /// Observed version for a get, new version for an accepted commit,
    /// expected version for a rejected one.
    pub version: u64,
    /// Expected version carried by a commit attempt.
    pub expected: Option<u64>,
    /// Effective read-set of a commit attempt.
    pub read_set: BTreeMap<String, u64>,
}

impl HistoryEvent {
    pub fn get(seq: u64, agent: &str, key: &str, version: u64) -> Self {
        Self {
            seq,
            kind: EventKind::Get,
            agent: agent.into(),
            key: key.into(),
            version,
            expected: None,
            read_set: BTreeMap::new(),
        }
    }

    pub fn commit_ok(seq: u64, agent: &str, key: &str, expected: u64, new_version: u64, reads: &[(&str, u64)]) -> Self {
        Self {
            seq,
            kind: EventKind::CommitOk,
            agent: agent.into(),
            key: key.into(),
            version: new_version,
            expected: Some(expected),
            read_set: reads.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn commit_reject(seq: u64, agent: &str, key: &str, expected: u64, reads: &[(&str, u64)]) -> Self {
        Self {
            seq,
            kind: EventKind::CommitReject,
            agent: agent.into(),
            key: key.into(),
            version: expected,
            expected: Some(expected),
            read_set: reads.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn is_commit(&self) -> bool {
        self.kind != EventKind::Get
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    WriteWriteUnserialized,
    CrossShardStaleAccepted,
    SrcPresent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Sequence numbers of the witnessing events, in history order; the last
    /// one is the offending commit.
    pub evidence: Vec<u64>,
}

impl Violation {
    pub fn commit_seq(&self) -> u64 {
        *self.evidence.last().expect("violation without evidence")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Legality {
    pub legal: bool,
    pub violations: Vec<Violation>,
}

fn check_contiguous(history: &[HistoryEvent]) -> Result<()> {
    let Some(first) = history.first() else {
        return Ok(());
    };
    for (i, e) in history.iter().enumerate() {
        if e.seq != first.seq + i as u64 {
            return Err(Error::MalformedHistory(format!(
                "seq {} at position {i}, expected {}",
                e.seq,
                first.seq + i as u64
            )));
        }
    }
    Ok(())
}

pub fn is_ori_legal(history: &[HistoryEvent]) -> Result<Legality> {
    check_contiguous(history)?;

    // (agent, key, version) -> seq of the latest such get
    let mut last_get: HashMap<(&str, &str, u64), u64> = HashMap::new();
    // key -> seq of latest accepted commit
    let mut last_ok: HashMap<&str, (u64, u64)> = HashMap::new();
    // key -> (version, seq) of the latest event that pinned the shard's version
    let mut known: HashMap<&str, (u64, u64)> = HashMap::new();
    let mut violations = Vec::new();

    for e in history {
        match e.kind {
            EventKind::Get => {
                last_get.insert((&e.agent, &e.key, e.version), e.seq);
                known.insert(&e.key, (e.version, e.seq));
            }
            EventKind::CommitReject => {}
            EventKind::CommitOk => {
                if let Some(&(prev_seq, prev_version)) = last_ok.get(e.key.as_str()) {
                    if e.version <= prev_version {
                        violations.push(Violation {
                            kind: ViolationKind::WriteWriteUnserialized,
                            evidence: vec![prev_seq, e.seq],
                        });
                    }
                }
                if let (Some(expected), Some(&(current, pinned_at))) = (e.expected, known.get(e.key.as_str())) {
                    if expected != current {
                        violations.push(Violation {
                            kind: ViolationKind::WriteWriteUnserialized,
                            evidence: vec![pinned_at, e.seq],
                        });
                    }
                }
                for (k, &v) in e.read_set.iter().filter(|(k, _)| **k != e.key) {
                    let get_seq = *last_get.get(&(e.agent.as_str(), k.as_str(), v)).ok_or_else(|| {
                        Error::MalformedHistory(format!(
                            "commit {} by {} cites {k}@{v} which it never read",
                            e.seq, e.agent
                        ))
                    })?;
                    if let Some(&(ok_seq, _)) = last_ok.get(k.as_str()) {
                        if ok_seq > get_seq {
                            violations.push(Violation {
                                kind: ViolationKind::CrossShardStaleAccepted,
                                evidence: vec![get_seq, ok_seq, e.seq],
                            });
                        }
                    }
                }
                last_ok.insert(&e.key, (e.seq, e.version));
                known.insert(&e.key, (e.version, e.seq));
            }
        }
    }
    Ok(Legality {
        legal: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrcWitness {
    pub first_agent: String,
    pub second_agent: String,
    pub version: u64,
    pub first_get: u64,
    pub second_get: u64,
    pub first_commit: u64,
    pub second_attempt: u64,
    /// Whether the second attempt was accepted.
    pub second_committed: bool,
}

impl SrcWitness {
    pub fn to_violation(&self) -> Violation {
        Violation {
            kind: ViolationKind::SrcPresent,
            evidence: vec![self.first_get, self.second_get, self.first_commit, self.second_attempt],
        }
    }
}

/// Every structural race on `key`.
pub fn src_witnesses(history: &[HistoryEvent], key: &str) -> Result<Vec<SrcWitness>> {
    check_contiguous(history)?;
    let on_key: Vec<&HistoryEvent> = history.iter().filter(|e| e.key == key).collect();
    let latest_get_before = |agent: &str, version: u64, before: u64| {
        on_key
            .iter()
            .filter(|e| e.kind == EventKind::Get && e.agent == agent && e.version == version && e.seq < before)
            .map(|e| e.seq)
            .max()
    };

    let mut out = Vec::new();
    for first in on_key.iter().filter(|e| e.kind == EventKind::CommitOk) {
        let Some(v) = first.expected else { continue };
        let Some(first_get) = latest_get_before(&first.agent, v, first.seq) else {
            continue;
        };
        for second in on_key
            .iter()
            .filter(|e| e.is_commit() && e.seq > first.seq && e.agent != first.agent && e.expected == Some(v))
        {
            let reread = on_key.iter().any(|e| {
                e.kind == EventKind::Get && e.agent == second.agent && e.seq > first.seq && e.seq < second.seq
            });
            if reread {
                continue;
            }
            let Some(second_get) = latest_get_before(&second.agent, v, second.seq) else {
                continue;
            };
            out.push(SrcWitness {
                first_agent: first.agent.clone(),
                second_agent: second.agent.clone(),
                version: v,
                first_get,
                second_get,
                first_commit: first.seq,
                second_attempt: second.seq,
                second_committed: second.kind == EventKind::CommitOk,
            });
        }
    }
    Ok(out)
}

pub fn contains_src(history: &[HistoryEvent], key: &str) -> Result<Option<SrcWitness>> {
    Ok(src_witnesses(history, key)?.into_iter().next())
}

/// Accepted commits that a legality check flags, by sequence number. These are
/// the commits accepted despite a stale read, of a sibling or of the commit key
/// itself.
pub fn corrupted_commits(history: &[HistoryEvent]) -> Result<Vec<u64>> {
    let legality = is_ori_legal(history)?;
    let mut seqs: Vec<u64> = legality.violations.iter().map(Violation::commit_seq).collect();
    seqs.sort_unstable();
    seqs.dedup();
    Ok(seqs)
}
