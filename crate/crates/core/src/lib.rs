//! Single-node shard registry with optimistic cross-shard commit validation.
//!
//! Clients read shards through [`Registry::read_shard`]; every read is logged
//! per agent in the [`delivery_log`]. A commit ([`Registry::commit`]) rebuilds
//! the agent's read-set from that log, rejects it if any sibling shard moved
//! since it was read, and otherwise applies the write and appends it to the
//! [`acp::wal`]. The [`history`] module checks recorded event traces and
//! enumerates small schedules exhaustively.

pub mod acp;
pub mod clock;
pub mod delivery_log;
pub mod error;
pub mod history;
pub mod registry;

pub use acp::wal::{replay_wal, Wal, WalImage, WalOptions, WalRecord};
pub use acp::{required_retry_budget, CommitOutcome, CommitRequest, CommitStatus, Mode};
pub use clock::{Clock, ManualClock, MonotonicClock, Timestamp};
pub use delivery_log::{DeliveryLogEntry, EffectiveReadSet, Session};
pub use error::{Error, Result};
pub use history::explore::{enumerate_schedules, ExploreConfig, ExploreReport, Topology};
pub use history::{contains_src, is_ori_legal, EventKind, HistoryEvent, Violation, ViolationKind};
pub use registry::{Counters, Registry, RegistryConfig, RegistrySnapshot, ShardRead, ShardState};
