//! Versioned shard store.
//!
//! Lock order is fixed: the registry `RwLock` first, then the token `Mutex`.
//! Nothing acquires them the other way round. Reads take the registry guard
//! exclusively because a read appends to the reader's delivery log and the
//! logged version has to be the version handed back.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

use crate::acp::wal::{self, Wal, WalImage, ADMIN_AGENT};
use crate::clock::Timestamp;
use crate::delivery_log::{DeliveryLog, Session};
use crate::error::{Error, Result};
use crate::history::{EventKind, HistoryEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub key: String,
    pub version: u64,
    pub content: String,
    /// Reject commits from anyone but the token holder.
    pub enforce_ownership: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardRead {
    pub key: String,
    pub version: u64,
    pub content: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub gets: u64,
    pub commits: u64,
    pub rejects: u64,
    pub cross_shard_stale: u64,
    pub version_mismatch: u64,
    pub session_expired: u64,
    pub ownership_violation: u64,
    /// Commits whose effective read-set was compared against the registry.
    pub view_checked_commits: u64,
    /// Of those, how many saw at least one sibling at a different version.
    pub view_divergent_commits: u64,
    /// Divergent commits that were nevertheless applied (ORI-OFF only).
    pub view_divergent_accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardState {
    pub version: u64,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrySnapshot {
    pub entries: BTreeMap<String, ShardState>,
    pub token_owners: BTreeMap<String, String>,
    pub counters: Counters,
}

impl RegistrySnapshot {
    pub fn versions(&self) -> BTreeMap<String, u64> {
        self.entries.iter().map(|(k, s)| (k.clone(), s.version)).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RegistryConfig {
    /// Applied to shards created through [`Registry::create_shard`].
    pub ownership_enforced: bool,
    /// Session time-to-live in milliseconds; `None` never expires.
    pub session_ttl: Option<u64>,
    /// Keep the full event trace for the history checker.
    pub record_history: bool,
}

#[derive(Debug, Default)]
pub(crate) struct History {
    pub(crate) events: Vec<HistoryEvent>,
}

impl History {
    pub(crate) fn push(
        &mut self,
        kind: EventKind,
        agent: &str,
        key: &str,
        version: u64,
        expected: Option<u64>,
        read_set: BTreeMap<String, u64>,
    ) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(HistoryEvent {
            seq,
            kind,
            agent: agent.to_owned(),
            key: key.to_owned(),
            version,
            expected,
            read_set,
        });
    }
}

#[derive(Debug)]
pub(crate) struct State {
    pub(crate) shards: BTreeMap<String, Shard>,
    pub(crate) log: DeliveryLog,
    pub(crate) counters: Counters,
    pub(crate) history: Option<History>,
    pub(crate) wal: Option<Wal>,
}

pub struct Registry {
    pub(crate) state: RwLock<State>,
    pub(crate) tokens: Mutex<HashMap<String, String>>,
    config: RegistryConfig,
}

impl Registry {
    pub fn new(config: RegistryConfig) -> Self {
        Self::build(config, None)
    }

    /// A registry that appends every creation and commit to `wal` before
    /// acknowledging it.
    pub fn with_wal(config: RegistryConfig, wal: Wal) -> Self {
        Self::build(config, Some(wal))
    }

    /// Rebuild from a full-content log image and keep appending to `wal`.
    pub fn restore(config: RegistryConfig, image: &WalImage, wal: Wal) -> Result<Self> {
        let reg = Self::build(config, Some(wal));
        {
            let mut st = reg.write();
            for (key, s) in &image.shards {
                let content = s.content.clone().ok_or_else(|| Error::CorruptWal {
                    record: image.last_sequence,
                    reason: format!("no stored content for {key}"),
                })?;
                st.shards.insert(
                    key.clone(),
                    Shard {
                        key: key.clone(),
                        version: s.version,
                        content,
                        enforce_ownership: reg.config.ownership_enforced,
                    },
                );
            }
        }
        Ok(reg)
    }

    fn build(config: RegistryConfig, wal: Option<Wal>) -> Self {
        let state = State {
            shards: BTreeMap::new(),
            log: DeliveryLog::new(config.session_ttl),
            counters: Counters::default(),
            history: config.record_history.then(History::default),
            wal,
        };
        Self {
            state: RwLock::new(state),
            tokens: Mutex::new(HashMap::new()),
            config,
        }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub(crate) fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().expect("registry lock poisoned")
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("registry lock poisoned")
    }

    /// Must only be called while holding the registry guard.
    pub(crate) fn token_table(&self) -> MutexGuard<'_, HashMap<String, String>> {
        self.tokens.lock().expect("token lock poisoned")
    }

    pub fn create_shard(&self, key: &str, content: &str) -> Result<u64> {
        self.create_shard_with(key, content, self.config.ownership_enforced)
    }

    pub fn create_shard_with(&self, key: &str, content: &str, enforce_ownership: bool) -> Result<u64> {
        let mut st = self.write();
        if st.shards.contains_key(key) {
            return Err(Error::KeyExists(key.to_owned()));
        }
        if let Some(w) = st.wal.as_mut() {
            w.append(key, 1, ADMIN_AGENT, content)?;
        }
        st.shards.insert(
            key.to_owned(),
            Shard {
                key: key.to_owned(),
                version: 1,
                content: content.to_owned(),
                enforce_ownership,
            },
        );
        Ok(1)
    }

    /// Return the current content and version, logging the read for `agent`
    /// inside the same critical section.
    pub fn read_shard(&self, key: &str, agent: &str, now: Timestamp) -> Result<ShardRead> {
        let mut st = self.write();
        let st = &mut *st;
        let shard = st.shards.get(key).ok_or_else(|| Error::UnknownKey(key.to_owned()))?;
        let out = ShardRead {
            key: shard.key.clone(),
            version: shard.version,
            content: shard.content.clone(),
        };
        st.log.record(agent, key, out.version, now);
        st.counters.gets += 1;
        if let Some(h) = st.history.as_mut() {
            h.push(EventKind::Get, agent, key, out.version, None, BTreeMap::new());
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        let st = self.read();
        let token_owners = self.token_table().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        RegistrySnapshot {
            entries: st
                .shards
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        ShardState {
                            version: s.version,
                            content: s.content.clone(),
                        },
                    )
                })
                .collect(),
            token_owners,
            counters: st.counters,
        }
    }

    pub fn counters(&self) -> Counters {
        self.read().counters
    }

    pub fn version_of(&self, key: &str) -> Option<u64> {
        self.read().shards.get(key).map(|s| s.version)
    }

    /// Clear shards, tokens, sessions, counters and history; start a fresh log
    /// segment.
    pub fn reset(&self) -> Result<()> {
        let mut st = self.write();
        st.shards.clear();
        st.log.clear();
        st.counters = Counters::default();
        if let Some(h) = st.history.as_mut() {
            h.events.clear();
        }
        self.token_table().clear();
        if let Some(w) = st.wal.as_mut() {
            w.reset()?;
        }
        Ok(())
    }

    pub fn expire_sessions(&self, now: Timestamp) -> usize {
        self.write().log.expire_sessions(now)
    }

    /// Copy of every live session, ordered by agent.
    pub fn session_logs(&self) -> Vec<Session> {
        let st = self.read();
        let mut out: Vec<Session> = st.log.sessions().cloned().collect();
        out.sort_by(|a, b| a.agent.cmp(&b.agent));
        out
    }

    pub fn session(&self, agent: &str) -> Option<Session> {
        self.read().log.session(agent).cloned()
    }

    /// Recorded event trace; empty unless `record_history` is set.
    pub fn history(&self) -> Vec<HistoryEvent> {
        self.read()
            .history
            .as_ref()
            .map(|h| h.events.clone())
            .unwrap_or_default()
    }

    pub fn wal_path(&self) -> Option<std::path::PathBuf> {
        self.read().wal.as_ref().map(|w| w.path().to_path_buf())
    }

    /// No logged read may be ahead of the shard's committed version.
    /// Returns the first offending `(agent, key, logged, committed)`.
    pub fn check_read_set_soundness(&self) -> std::result::Result<(), (String, String, u64, u64)> {
        let st = self.read();
        for s in st.log.sessions() {
            for e in &s.entries {
                let committed = st.shards.get(&e.key).map_or(0, |sh| sh.version);
                if e.version > committed {
                    return Err((s.agent.clone(), e.key.clone(), e.version, committed));
                }
            }
        }
        Ok(())
    }

    /// Digest of each shard's current content, for comparison with a replayed
    /// log image.
    pub fn digests(&self) -> BTreeMap<String, (u64, wal::ContentDigest)> {
        self.read()
            .shards
            .iter()
            .map(|(k, s)| (k.clone(), (s.version, wal::digest(&s.content))))
            .collect()
    }
}
