use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown shard key: {0}")]
    UnknownKey(String),

    #[error("shard key already exists: {0}")]
    KeyExists(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("corrupt write-ahead log at record {record}: {reason}")]
    CorruptWal { record: u64, reason: String },

    #[error("malformed history: {0}")]
    MalformedHistory(String),

    #[error("exploration budget exceeded: {needed} schedules > cap {cap}")]
    BudgetExceeded { needed: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
