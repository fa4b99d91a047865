//! Atomic commit path.
//!
//! One commit runs entirely under the registry's exclusive guard:
//!
//! 1. build the committer's effective read-set from its delivery log and any
//!    explicit declaration;
//! 2. compare every sibling entry (key other than the commit key) against the
//!    registry, in key order, rejecting on the first mismatch;
//! 3. compare the expected version of the commit key;
//! 4. insert the ownership token if absent (rejecting non-owners when the
//!    shard enforces ownership);
//! 5. append to the WAL, replace the content and bump the version.
//!
//! Rejections leave shards, tokens and the WAL untouched. The divergence
//! counters run at step 2 in both modes; [`Mode::OriOff`] skips only the
//! rejections of steps 2 and 3.

pub mod wal;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::delivery_log::EffectiveReadSet;
use crate::error::{Error, Result};
use crate::history::EventKind;
use crate::registry::{Registry, State};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRequest {
    pub key: String,
    pub expected_version: u64,
    /// Full replacement content.
    pub delta: String,
    pub agent: String,
    pub explicit_read_set: Option<BTreeMap<String, u64>>,
}

impl CommitRequest {
    pub fn new(
        key: impl Into<String>,
        expected_version: u64,
        delta: impl Into<String>,
        agent: impl Into<String>,
    ) -> Self {
        Self {
            key: key.into(),
            expected_version,
            delta: delta.into(),
            agent: agent.into(),
            explicit_read_set: None,
        }
    }

    pub fn with_read_set(mut self, reads: BTreeMap<String, u64>) -> Self {
        self.explicit_read_set = Some(reads);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommitStatus {
    Ok,
    CrossShardStale,
    VersionMismatch,
    SessionExpired,
    OwnershipViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommitOutcome {
    Committed {
        new_version: u64,
    },
    /// `key` is the first sibling, in key order, whose read version differs
    /// from the registry.
    CrossShardStale {
        key: String,
        read: u64,
        current: u64,
    },
    VersionMismatch {
        expected: u64,
        current: u64,
    },
    SessionExpired,
    OwnershipViolation {
        owner: String,
    },
}

impl CommitOutcome {
    pub fn status(&self) -> CommitStatus {
        match self {
            CommitOutcome::Committed { .. } => CommitStatus::Ok,
            CommitOutcome::CrossShardStale { .. } => CommitStatus::CrossShardStale,
            CommitOutcome::VersionMismatch { .. } => CommitStatus::VersionMismatch,
            CommitOutcome::SessionExpired => CommitStatus::SessionExpired,
            CommitOutcome::OwnershipViolation { .. } => CommitStatus::OwnershipViolation,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, CommitOutcome::Committed { .. })
    }

    pub fn new_version(&self) -> Option<u64> {
        match self {
            CommitOutcome::Committed { new_version } => Some(*new_version),
            _ => None,
        }
    }

    pub fn stale_key(&self) -> Option<&str> {
        match self {
            CommitOutcome::CrossShardStale { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Whether commits are validated (ORI-ON) or last-writer-wins (ORI-OFF).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    OriOn,
    OriOff,
}

impl Mode {
    pub fn ori_enabled(self) -> bool {
        self == Mode::OriOn
    }
}

impl Registry {
    /// Validated commit.
    pub fn commit(&self, req: &CommitRequest, now: Timestamp) -> Result<CommitOutcome> {
        self.commit_inner(req, now, true)
    }

    /// Last-writer-wins commit: no staleness or version check, but the
    /// divergence counters, token table and WAL behave as in [`Registry::commit`].
    pub fn commit_lww(&self, req: &CommitRequest, now: Timestamp) -> Result<CommitOutcome> {
        self.commit_inner(req, now, false)
    }

    pub fn submit(&self, req: &CommitRequest, now: Timestamp, mode: Mode) -> Result<CommitOutcome> {
        self.commit_inner(req, now, mode.ori_enabled())
    }

    fn commit_inner(&self, req: &CommitRequest, now: Timestamp, validate: bool) -> Result<CommitOutcome> {
        if req.expected_version == 0 {
            return Err(Error::Domain("expected_version must be at least 1".into()));
        }
        let mut guard = self.write();
        let st = &mut *guard;
        let current = st
            .shards
            .get(&req.key)
            .ok_or_else(|| Error::UnknownKey(req.key.clone()))?
            .version;

        let read_set = match st
            .log
            .effective_read_set(&req.agent, &req.key, req.explicit_read_set.as_ref(), now)
        {
            Ok(rs) => Some(rs),
            Err(_) if validate => {
                return Ok(reject(st, req, None, CommitOutcome::SessionExpired));
            }
            // LWW has nothing to validate against; it still commits.
            Err(_) => None,
        };

        let mut stale = None;
        if let Some(rs) = &read_set {
            st.counters.view_checked_commits += 1;
            stale = first_stale_sibling(st, rs, &req.key);
            if stale.is_some() {
                st.counters.view_divergent_commits += 1;
            }
        }

        if validate {
            if let Some((key, read, current)) = stale {
                let out = CommitOutcome::CrossShardStale { key, read, current };
                return Ok(reject(st, req, read_set, out));
            }
            if current != req.expected_version {
                let out = CommitOutcome::VersionMismatch {
                    expected: req.expected_version,
                    current,
                };
                return Ok(reject(st, req, read_set, out));
            }
        }

        let enforce = st.shards[&req.key].enforce_ownership;
        let new_version = current + 1;
        {
            let mut tokens = self.token_table();
            if let Some(owner) = tokens.get(&req.key) {
                if enforce && owner != &req.agent {
                    let out = CommitOutcome::OwnershipViolation { owner: owner.clone() };
                    drop(tokens);
                    return Ok(reject(st, req, read_set, out));
                }
            }
            if let Some(w) = st.wal.as_mut() {
                w.append(&req.key, new_version, &req.agent, &req.delta)?;
            }
            tokens.entry(req.key.clone()).or_insert_with(|| req.agent.clone());
        }

        let shard = st.shards.get_mut(&req.key).expect("checked above");
        shard.content.clone_from(&req.delta);
        shard.version = new_version;
        st.counters.commits += 1;
        if stale.is_some() {
            st.counters.view_divergent_accepted += 1;
        }
        if let Some(h) = st.history.as_mut() {
            h.push(
                EventKind::CommitOk,
                &req.agent,
                &req.key,
                new_version,
                Some(req.expected_version),
                read_set.map(|rs| rs.reads).unwrap_or_default(),
            );
        }
        Ok(CommitOutcome::Committed { new_version })
    }
}

fn first_stale_sibling(st: &State, rs: &EffectiveReadSet, key: &str) -> Option<(String, u64, u64)> {
    rs.siblings(key).find_map(|(k, read)| {
        let current = st.shards.get(k).map_or(0, |s| s.version);
        (current != read).then(|| (k.to_owned(), read, current))
    })
}

fn reject(st: &mut State, req: &CommitRequest, rs: Option<EffectiveReadSet>, out: CommitOutcome) -> CommitOutcome {
    let c = &mut st.counters;
    c.rejects += 1;
    match out.status() {
        CommitStatus::CrossShardStale => c.cross_shard_stale += 1,
        CommitStatus::VersionMismatch => c.version_mismatch += 1,
        CommitStatus::SessionExpired => c.session_expired += 1,
        CommitStatus::OwnershipViolation => c.ownership_violation += 1,
        CommitStatus::Ok => unreachable!("reject called with a success"),
    }
    if let Some(h) = st.history.as_mut() {
        h.push(
            EventKind::CommitReject,
            &req.agent,
            &req.key,
            req.expected_version,
            Some(req.expected_version),
            rs.map(|rs| rs.reads).unwrap_or_default(),
        );
    }
    out
}

/// Probability that an agent commits within `budget` attempts when each
/// attempt conflicts independently with probability `scr`.
pub fn commit_probability(scr: f64, budget: u32) -> f64 {
    1.0 - scr.powi(budget as i32)
}

/// Least retry budget `K` with `1 - scr^K >= target`.
pub fn required_retry_budget(scr: f64, target: f64) -> Result<u32> {
    if !(0.0..1.0).contains(&scr) {
        return Err(Error::Domain(format!("conflict rate {scr} not in [0, 1)")));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target {target} not in (0, 1)")));
    }
    if scr == 0.0 {
        return Ok(1);
    }
    let k = ((1.0 - target).ln() / scr.ln()).ceil();
    Ok((k as u32).max(1))
}
