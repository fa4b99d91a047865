//! Per-agent session logs of observed reads.
//!
//! Every successful shard read appends `(key, version, observed_at)` to the
//! reading agent's session. At commit time the session is collapsed into an
//! [`EffectiveReadSet`] (latest logged version per key) and merged with any
//! read-set the agent declared explicitly; declared versions win.
//!
//! The log has no locking of its own. The registry owns it and mutates it only
//! while holding its exclusive guard.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryLogEntry {
    pub key: String,
    pub version: u64,
    pub observed_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub agent: String,
    pub entries: Vec<DeliveryLogEntry>,
    pub created_at: Timestamp,
    /// `None` never expires.
    pub ttl: Option<u64>,
}

impl Session {
    fn new(agent: &str, now: Timestamp, ttl: Option<u64>) -> Self {
        Self {
            agent: agent.to_owned(),
            entries: Vec::new(),
            created_at: now,
            ttl,
        }
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        match self.ttl {
            Some(ttl) => now.saturating_sub(self.created_at) > ttl,
            None => false,
        }
    }

    /// Latest logged version for `key`, if the agent ever read it.
    pub fn latest(&self, key: &str) -> Option<u64> {
        self.entries.iter().rev().find(|e| e.key == key).map(|e| e.version)
    }
}

/// Key to version map used for commit validation. Ordered so that validation
/// visits siblings in a deterministic (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveReadSet {
    pub reads: BTreeMap<String, u64>,
}

impl EffectiveReadSet {
    pub fn get(&self, key: &str) -> Option<u64> {
        self.reads.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.reads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty()
    }

    /// Entries other than `key`, in key order.
    pub fn siblings<'a>(&'a self, key: &'a str) -> impl Iterator<Item = (&'a str, u64)> + 'a {
        self.reads
            .iter()
            .filter(move |(k, _)| k.as_str() != key)
            .map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionExpired;

#[derive(Debug, Default)]
pub struct DeliveryLog {
    sessions: HashMap<String, Session>,
    /// Agents whose session was dropped by [`DeliveryLog::expire_sessions`] and
    /// who have not read anything since.
    expired: HashSet<String>,
    ttl: Option<u64>,
}

impl DeliveryLog {
    pub fn new(ttl: Option<u64>) -> Self {
        Self { ttl, ..Self::default() }
    }

    pub fn ttl(&self) -> Option<u64> {
        self.ttl
    }

    /// Append one observed read. A read from an agent without a live session
    /// opens a fresh one.
    pub fn record(&mut self, agent: &str, key: &str, version: u64, now: Timestamp) {
        self.expired.remove(agent);
        let ttl = self.ttl;
        let session = self
            .sessions
            .entry(agent.to_owned())
            .or_insert_with(|| Session::new(agent, now, ttl));
        if session.is_expired(now) {
            *session = Session::new(agent, now, ttl);
        }
        session.entries.push(DeliveryLogEntry {
            key: key.to_owned(),
            version,
            observed_at: now,
        });
    }

    /// Union of the explicit declaration and the agent's logged reads. Within
    /// the log the most recent entry per key wins; explicit entries override
    /// the log. `commit_key` is kept in the set; validators skip it.
    pub fn effective_read_set(
        &self,
        agent: &str,
        _commit_key: &str,
        explicit: Option<&BTreeMap<String, u64>>,
        now: Timestamp,
    ) -> Result<EffectiveReadSet, SessionExpired> {
        if self.expired.contains(agent) {
            return Err(SessionExpired);
        }
        let mut reads = BTreeMap::new();
        if let Some(session) = self.sessions.get(agent) {
            if session.is_expired(now) {
                return Err(SessionExpired);
            }
            for e in &session.entries {
                reads.insert(e.key.clone(), e.version);
            }
        }
        if let Some(explicit) = explicit {
            for (k, v) in explicit {
                reads.insert(k.clone(), *v);
            }
        }
        Ok(EffectiveReadSet { reads })
    }

    /// Drop every session past its TTL. Returns how many were dropped.
    pub fn expire_sessions(&mut self, now: Timestamp) -> usize {
        let dead: Vec<String> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.is_expired(now))
            .map(|(a, _)| a.clone())
            .collect();
        for agent in &dead {
            self.sessions.remove(agent);
            self.expired.insert(agent.clone());
        }
        dead.len()
    }

    pub fn session(&self, agent: &str) -> Option<&Session> {
        self.sessions.get(agent)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn clear(&mut self) {
        self.sessions.clear();
        self.expired.clear();
    }
}
